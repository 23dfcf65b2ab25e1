import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import curve_fit
from sklearn.base import clone

from bellfit.data import CoincidenceDataset
from bellfit.errors import DomainError, PreconditionError
from bellfit.fit import (CosineLawRegressor, eta_overall, fit_cosine, mean_rate,
                         predict_rate, visibility_discrete, visibility_pair)
from bellfit.lhvmodel import quantum_dataset

HALF_PI = math.pi / 2


def nonlinear_fit(d, mask=None):
    """Independent route: direct nonlinear least squares on A, V, psi."""
    mask = np.ones(d.n, bool) if mask is None else mask

    def model(phi, a, v, psi):
        return a * (1 + v * np.cos(2 * phi + psi))

    p, _ = curve_fit(model, d.angles[mask], d.rates[mask], p0=[np.mean(d.rates), 0.9, 0.0],
                     xtol=1e-14, ftol=1e-14)
    return p


def test_mean_rate(reference):
    assert mean_rate(reference) == pytest.approx(4976.06, abs=0.01)


def test_mean_rate_constant_and_linear(reference, grid8):
    const = quantum_dataset(0.0, 0.0, 37.0, grid8)
    assert mean_rate(const) == pytest.approx(37.0)
    assert mean_rate(reference.scaled(2)) == pytest.approx(2 * mean_rate(reference))


def test_visibility_discrete(reference, grid8):
    assert visibility_discrete(reference) == pytest.approx(0.9897, abs=0.0002)
    assert visibility_discrete(quantum_dataset(1.0, 0.0, 50.0, grid8)) == pytest.approx(1.0)
    assert visibility_discrete(quantum_dataset(0.0, 0.0, 50.0, grid8)) == pytest.approx(0.0, abs=1e-15)


def test_visibility_discrete_needs_grid():
    d = CoincidenceDataset.from_points([(0, 1, 0), (30, 1, 0), (90, 1, 0)])
    with pytest.raises(PreconditionError):
        visibility_discrete(d)


def test_fit_reference_matches_nonlinear_oracle(reference):
    f = fit_cosine(reference)
    a, v, psi = nonlinear_fit(reference)
    assert f.mean_rate == pytest.approx(a, rel=1e-8)
    assert f.visibility == pytest.approx(v, rel=1e-8)
    assert f.phase == pytest.approx(psi, abs=1e-8)
    # frozen values from the oracle above
    assert f.visibility == pytest.approx(0.98975830068, abs=1e-9)
    assert f.phase_deg == pytest.approx(0.31490933572, abs=1e-8)


def test_fit_reference_published(reference):
    f = fit_cosine(reference)
    assert f.visibility == pytest.approx(0.9897, abs=0.0005)
    assert f.phase_deg == pytest.approx(0.31, abs=0.05)
    g = fit_cosine(reference, exclude=[HALF_PI])
    assert g.visibility == pytest.approx(0.9966, abs=0.0005)
    assert g.phase_deg == pytest.approx(0.31, abs=0.05)
    assert len(g.residuals) == 7
    assert g.excluded_angles == (pytest.approx(HALF_PI),)


def test_exclusion_matches_oracle(reference):
    mask = np.arange(8) != 4
    a, v, psi = nonlinear_fit(reference, mask)
    g = fit_cosine(reference, exclude=[HALF_PI + math.pi])
    assert g.visibility == pytest.approx(v, rel=1e-8)
    assert g.phase == pytest.approx(psi, abs=1e-8)


def test_exact_model_recovered(exact_cosine):
    f = fit_cosine(exact_cosine)
    assert f.mean_rate == pytest.approx(100.0, rel=1e-13)
    assert f.visibility == pytest.approx(0.5, rel=1e-13)
    assert f.phase == pytest.approx(0.0, abs=1e-13)
    assert np.max(np.abs(f.residuals)) < 1e-14


def test_unknown_exclusion_and_too_few_points(reference):
    with pytest.raises(PreconditionError):
        fit_cosine(reference, exclude=[math.radians(10)])
    with pytest.raises(PreconditionError):
        fit_cosine(reference, exclude=[math.radians(a) for a in (0, 22.5, 45, 67.5, 90, 112.5)])


def test_inverse_variance(reference):
    f = fit_cosine(reference, weighting="inverse_variance")
    assert 0.98 < f.visibility < 1.0
    zero = reference.with_rates(reference.rates, np.zeros(8))
    with pytest.raises(PreconditionError):
        fit_cosine(zero, weighting="inverse_variance")


def test_inverse_variance_sigma_matches_weighted_oracle(reference):
    # with 1/sigma^2 weights, sigma_V from the covariance equals the
    # finite-difference propagation of the rate sigmas
    f = fit_cosine(reference, weighting="inverse_variance")
    grads = []
    for i in range(8):
        h = 1e-4
        up = reference.rates.copy(); up[i] += h
        dn = reference.rates.copy(); dn[i] -= h
        vu = fit_cosine(reference.with_rates(up), weighting="inverse_variance").visibility
        vd = fit_cosine(reference.with_rates(dn), weighting="inverse_variance").visibility
        grads.append((vu - vd) / (2 * h))
    expected = math.sqrt(np.sum((np.array(grads) * reference.sigmas) ** 2))
    assert f.visibility_sigma == pytest.approx(expected, rel=1e-5)


def test_predict_rate(reference):
    f = fit_cosine(reference)
    assert predict_rate(f, HALF_PI) == pytest.approx(51.3, abs=0.5)
    g = fit_cosine(reference, exclude=[HALF_PI])
    assert predict_rate(g, HALF_PI) == pytest.approx(17.0, abs=0.5)
    assert predict_rate(f, 0.3) == pytest.approx(predict_rate(f, 0.3 + math.pi))


def test_visibility_pair_reference(reference):
    vp = visibility_pair(reference)
    # direct arithmetic on the table rows
    assert vp.v_a == pytest.approx((9906.2 - 108.0) / (9906.2 + 108.0))
    assert vp.v_b == pytest.approx(math.sqrt(2) * (8439.6 - 1454.1) / (8439.6 + 1454.1))
    assert vp.v_a == pytest.approx(0.9784, abs=1e-4)
    assert vp.v_b == pytest.approx(0.9985, abs=1e-4)
    assert vp.ratio == pytest.approx(1.0205, abs=0.0005)
    assert vp.ratio_sigma == pytest.approx(0.0048, abs=0.001)
    assert vp.ratio_sigma_quadrature < vp.ratio_sigma


def test_visibility_pair_sigma_finite_difference(reference):
    idx = [reference.index_of(a) for a in (0, 22.5, 67.5, 90)]
    base = visibility_pair(reference).ratio
    contrib = []
    for i in idx:
        r = reference.rates.copy()
        r[i] += 1e-3
        contrib.append((visibility_pair(reference.with_rates(r)).ratio - base) / 1e-3
                       * reference.sigmas[i])
    vp = visibility_pair(reference)
    assert vp.ratio_sigma == pytest.approx(np.sum(np.abs(contrib)), rel=1e-4)
    assert vp.ratio_sigma_quadrature == pytest.approx(math.sqrt(np.sum(np.square(contrib))), rel=1e-4)


@given(st.floats(0.05, 1.0))
def test_visibility_pair_quantum_ratio_is_one(v):
    d = quantum_dataset(v, 0.0, 1000.0, [0, 22.5, 45, 67.5, 90, 112.5, 135, 157.5])
    assert visibility_pair(d).ratio == pytest.approx(1.0, abs=1e-12)


def test_visibility_pair_missing_angle():
    d = CoincidenceDataset.from_points([(0, 2, 1), (22.5, 2, 1), (90, 1, 1)])
    with pytest.raises(PreconditionError, match="67.5"):
        visibility_pair(d)


def test_eta_overall():
    assert eta_overall(100, 400, 400) == pytest.approx(0.5)
    assert eta_overall(50, 100, 100) == pytest.approx(1.0)
    with pytest.raises(DomainError):
        eta_overall(1, 0, 0)
    with pytest.raises(PreconditionError):
        eta_overall(4976.06, None, None)


rates8 = st.lists(st.floats(100, 1e4), min_size=8, max_size=8)


@settings(max_examples=50)
@given(rates8, st.floats(0.1, 100))
def test_fit_scale_equivariant(rates, s):
    d = CoincidenceDataset([22.5 * k for k in range(8)], rates, [1.0] * 8)
    f, g = fit_cosine(d), fit_cosine(d.scaled(s))
    assert g.mean_rate == pytest.approx(s * f.mean_rate, rel=1e-9)
    assert g.visibility == pytest.approx(f.visibility, rel=1e-9, abs=1e-12)
    if f.visibility > 1e-6:
        assert g.phase == pytest.approx(f.phase, abs=1e-7)


@settings(max_examples=50)
@given(rates8)
def test_residuals_sum_to_zero(rates):
    d = CoincidenceDataset([22.5 * k for k in range(8)], rates, [1.0] * 8)
    assert abs(np.sum(fit_cosine(d).residuals)) < 1e-12


@settings(max_examples=50)
@given(st.floats(0.5, 1.0), st.floats(-0.5, 0.5), st.lists(st.floats(-0.002, 0.002), min_size=8, max_size=8))
def test_discrete_visibility_agrees_with_fit(v, psi_deg, noise):
    # at small V the phase is ill-defined and the signed projection differs
    # from the fitted amplitude, so only the high-visibility regime is checked
    d = quantum_dataset(v, math.radians(psi_deg), 1000.0, [22.5 * k for k in range(8)])
    d = d.with_rates(np.maximum(d.rates + 1000.0 * np.array(noise), 0.0))
    assert abs(visibility_discrete(d) - fit_cosine(d).visibility) <= 0.0005


def test_regressor_matches_fit_cosine(reference):
    est = CosineLawRegressor().fit(reference.angles_deg, reference.rates)
    f = fit_cosine(reference)
    assert est.visibility_ == pytest.approx(f.visibility)
    assert est.phase_ == pytest.approx(f.phase)
    assert est.predict([[90.0]])[0] == pytest.approx(predict_rate(f, HALF_PI))
    assert est.score(reference.angles_deg.reshape(-1, 1), reference.rates) > 0.999


def test_regressor_params_and_clone(reference):
    est = CosineLawRegressor(weighting="inverse_variance", exclude_deg=[90])
    assert est.get_params() == {"weighting": "inverse_variance", "exclude_deg": [90]}
    c = clone(est).fit_dataset(reference)
    g = fit_cosine(reference, exclude=[HALF_PI], weighting="inverse_variance")
    assert c.visibility_ == pytest.approx(g.visibility)


def test_regressor_allows_repeats_and_checks_fitted():
    from sklearn.exceptions import NotFittedError
    est = CosineLawRegressor()
    with pytest.raises(NotFittedError):
        est.predict([0.0])
    x = np.array([0, 0, 45, 90, 135, 90.0])
    y = 10 * (1 + 0.4 * np.cos(2 * np.radians(x)))
    est.fit(x, y)
    assert est.visibility_ == pytest.approx(0.4)


def test_fit_to_dict_fields(reference):
    keys = set(fit_cosine(reference).to_dict())
    assert keys == {"mean_rate", "visibility", "phase_deg", "excluded_angles_deg", "residuals"}
