"""Rate estimators and the cosine-law fit of coincidence data.

The quantum law ``R(phi) = A [1 + V cos(2 phi + psi)]`` is linear in the
basis ``1, cos 2phi, sin 2phi``::

    R = a + b cos 2phi + c sin 2phi,   A = a,  V = hypot(b, c) / a,
    psi = atan2(-c, b)

so the fit is a closed-form linear least-squares solve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .data import PI, CoincidenceDataset, canonicalize
from .errors import DomainError, FitError, PreconditionError

__all__ = [
    "CosineFit",
    "VisibilityPair",
    "mean_rate",
    "visibility_discrete",
    "fit_cosine",
    "predict_rate",
    "visibility_pair",
    "eta_overall",
    "CosineLawRegressor",
]

WEIGHTINGS = ("uniform", "inverse_variance")

# fits slightly above 1 are legitimate; beyond this something is wrong
VISIBILITY_SOFT_CAP = 1.05


def mean_rate(d: CoincidenceDataset) -> float:
    """Arithmetic mean of the coincidence rates."""
    return float(np.mean(d.rates))


def _require_grid(d: CoincidenceDataset):
    if not d.is_uniform_grid():
        raise PreconditionError(
            "angles must form a uniform grid pi k / n (up to a common offset)")


def visibility_discrete(d: CoincidenceDataset) -> float:
    """Visibility from the discrete cosine projection, ``2 sum R cos 2phi / (n <R>)``.

    Only defined on uniform angle grids, where it is the psi = 0 projection
    of the least-squares fit.
    """
    _require_grid(d)
    m = mean_rate(d)
    if m <= 0:
        raise PreconditionError("mean rate must be positive")
    return float(2.0 * np.sum(d.rates * np.cos(2.0 * d.angles)) / (d.n * m))


@dataclass(frozen=True, eq=False)
class CosineFit:
    """Result of a cosine-law fit.

    ``phase`` and ``excluded_angles`` are in radians. ``residuals`` holds
    ``(data - model) / mean_rate`` for each point that took part in the fit,
    in dataset order.
    """

    mean_rate: float
    visibility: float
    phase: float
    excluded_angles: tuple = ()
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    mean_rate_sigma: float = 0.0
    visibility_sigma: float = 0.0
    phase_sigma: float = 0.0
    weighting: str = "uniform"

    def __post_init__(self):
        if not self.mean_rate > 0:
            raise FitError(f"fitted mean rate {self.mean_rate} is not positive")
        res = np.array(self.residuals, dtype=float)
        res.setflags(write=False)
        object.__setattr__(self, "residuals", res)
        object.__setattr__(self, "excluded_angles", tuple(self.excluded_angles))

    @property
    def phase_deg(self) -> float:
        return math.degrees(self.phase)

    @property
    def within_soft_cap(self) -> bool:
        return abs(self.visibility) <= VISIBILITY_SOFT_CAP

    def predict(self, phi):
        return predict_rate(self, phi)

    def to_dict(self) -> dict:
        return {
            "mean_rate": self.mean_rate,
            "visibility": self.visibility,
            "phase_deg": self.phase_deg,
            "excluded_angles_deg": [math.degrees(a) for a in self.excluded_angles],
            "residuals": self.residuals.tolist(),
        }


def _design(angles):
    two = 2.0 * np.asarray(angles, dtype=float)
    return np.column_stack([np.ones_like(two), np.cos(two), np.sin(two)])


def _weights(sigmas, weighting):
    if weighting not in WEIGHTINGS:
        raise ValueError(f"weighting must be one of {WEIGHTINGS}, got {weighting!r}")
    sigmas = np.asarray(sigmas, dtype=float)
    if weighting == "uniform":
        return np.ones_like(sigmas)
    if np.any(sigmas <= 0):
        raise PreconditionError(
            "inverse-variance weighting needs every sigma > 0")
    return 1.0 / sigmas**2


def _solve_linear(angles, rates, sigmas, weighting):
    """Weighted least squares in the (1, cos 2phi, sin 2phi) basis.

    Returns the coefficients ``(a, b, c)`` and their covariance propagated
    from ``sigmas``.
    """
    X = _design(angles)
    y = np.asarray(rates, dtype=float)
    w = _weights(sigmas, weighting)
    if len(y) < 3:
        raise PreconditionError(f"need at least 3 points to fit, got {len(y)}")
    normal = X.T @ (w[:, None] * X)
    if np.linalg.cond(normal) > 1e12:
        raise FitError("singular normal equations (angles degenerate mod pi/2)")
    inv = np.linalg.inv(normal)
    coef = inv @ (X.T @ (w * y))
    # sandwich form; reduces to inv(normal) for inverse-variance weights
    s2 = np.asarray(sigmas, dtype=float) ** 2
    cov = inv @ (X.T @ ((w**2 * s2)[:, None] * X)) @ inv
    return coef, cov


def _amplitude_phase(coef, cov):
    a, b, c = coef
    if not a > 0:
        raise FitError(f"fitted mean rate {a} is not positive")
    h = math.hypot(b, c)
    v = h / a
    psi = math.atan2(-c, b)
    if h > 0:
        jv = np.array([-h / a**2, b / (a * h), c / (a * h)])
        jp = np.array([0.0, c / h**2, -b / h**2])
        v_sig = math.sqrt(max(jv @ cov @ jv, 0.0))
        p_sig = math.sqrt(max(jp @ cov @ jp, 0.0))
    else:
        v_sig = math.sqrt(max(cov[1, 1] + cov[2, 2], 0.0)) / a
        p_sig = math.inf
    return a, v, psi, math.sqrt(max(cov[0, 0], 0.0)), v_sig, p_sig


def _match_exclusions(d: CoincidenceDataset, exclude):
    mask = np.ones(d.n, dtype=bool)
    canon = canonicalize(d.angles)
    matched = []
    for phi in exclude:
        t = canonicalize(phi)
        dist = np.abs(canon - t)
        dist = np.minimum(dist, PI - dist)
        i = int(np.argmin(dist))
        if dist[i] > 1e-6:
            raise PreconditionError(
                f"excluded angle {math.degrees(phi):g} deg is not in the dataset")
        mask[i] = False
        matched.append(float(d.angles[i]))
    return mask, tuple(sorted(set(matched)))


def fit_cosine(d: CoincidenceDataset, exclude=(), weighting: str = "uniform") -> CosineFit:
    """Least-squares fit of ``A [1 + V cos(2 phi + psi)]``.

    Parameters
    ----------
    d : CoincidenceDataset
    exclude : iterable of float
        Angles (radians, any representative mod pi) to leave out.
    weighting : {"uniform", "inverse_variance"}
    """
    mask, excluded = _match_exclusions(d, exclude)
    if mask.sum() < 3:
        raise PreconditionError(
            f"need at least 3 non-excluded points, got {int(mask.sum())}")
    angles, rates, sigmas = d.angles[mask], d.rates[mask], d.sigmas[mask]
    coef, cov = _solve_linear(angles, rates, sigmas, weighting)
    a, v, psi, a_sig, v_sig, p_sig = _amplitude_phase(coef, cov)
    model = _design(angles) @ coef
    return CosineFit(
        mean_rate=a, visibility=v, phase=psi, excluded_angles=excluded,
        residuals=(rates - model) / a, mean_rate_sigma=a_sig,
        visibility_sigma=v_sig, phase_sigma=p_sig, weighting=weighting)


def predict_rate(f: CosineFit, phi):
    """Rate of the fitted law at ``phi`` (radians, scalar or array)."""
    out = f.mean_rate * (1.0 + f.visibility * np.cos(2.0 * np.asarray(phi) + f.phase))
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class VisibilityPair:
    """Visibilities from the 0/90 deg pair and the 22.5/67.5 deg pair.

    ``ratio_sigma`` adds the first-order contributions of the four rate
    sigmas linearly (maximum error); ``ratio_sigma_quadrature`` adds them
    in quadrature.
    """

    v_a: float
    v_b: float
    ratio: float
    ratio_sigma: float
    ratio_sigma_quadrature: float = 0.0
    v_a_sigma: float = 0.0
    v_b_sigma: float = 0.0

    def to_dict(self) -> dict:
        return {"v_a": self.v_a, "v_b": self.v_b, "ratio": self.ratio,
                "ratio_sigma": self.ratio_sigma,
                "ratio_sigma_quadrature": self.ratio_sigma_quadrature,
                "v_a_sigma": self.v_a_sigma, "v_b_sigma": self.v_b_sigma}


def visibility_pair(d: CoincidenceDataset) -> VisibilityPair:
    """V_A, V_B and their ratio with first-order error propagation.

    ``V_A = (R0 - R90) / (R0 + R90)`` and
    ``V_B = sqrt(2) (R22.5 - R67.5) / (R22.5 + R67.5)``; for a pure cosine
    law with zero phase they are equal.
    """
    idx = {}
    for angle in (0.0, 22.5, 67.5, 90.0):
        i = d.index_of(angle)
        if i is None:
            raise PreconditionError(f"dataset has no point at {angle:g} deg")
        idx[angle] = i
    x, y = d.rates[idx[0.0]], d.rates[idx[90.0]]
    u, w = d.rates[idx[22.5]], d.rates[idx[67.5]]
    sig = np.array([d.sigmas[idx[a]] for a in (0.0, 90.0, 22.5, 67.5)])
    if x + y <= 0 or u + w <= 0:
        raise PreconditionError("rate pairs must have a positive sum")
    r2 = math.sqrt(2.0)
    v_a = (x - y) / (x + y)
    v_b = r2 * (u - w) / (u + w)
    if v_a == 0:
        raise DomainError("V_A is zero; the ratio is undefined")
    ratio = v_b / v_a
    # partial derivatives with respect to (R0, R90, R22.5, R67.5)
    g_a = np.array([2 * y, -2 * x, 0.0, 0.0]) / (x + y) ** 2
    g_b = r2 * np.array([0.0, 0.0, 2 * w, -2 * u]) / (u + w) ** 2
    g_ratio = g_b / v_a - v_b * g_a / v_a**2
    return VisibilityPair(
        v_a=float(v_a), v_b=float(v_b), ratio=float(ratio),
        ratio_sigma=float(np.sum(np.abs(g_ratio) * sig)),
        ratio_sigma_quadrature=float(np.sqrt(np.sum((g_ratio * sig) ** 2))),
        v_a_sigma=float(np.sqrt(np.sum((g_a * sig) ** 2))),
        v_b_sigma=float(np.sqrt(np.sum((g_b * sig) ** 2))))


def eta_overall(mean_coincidence: float, r1: float, r2: float) -> float:
    """Overall detection efficiency ``4 <R12> / (R1 + R2)``."""
    if r1 is None or r2 is None:
        raise PreconditionError(
            "singles rates are required; use an EfficiencyContext instead")
    if not r1 + r2 > 0:
        raise DomainError("R1 + R2 must be positive")
    return 4.0 * mean_coincidence / (r1 + r2)


class CosineLawRegressor(RegressorMixin, BaseEstimator):
    """Scikit-learn style estimator for the cosine law of coincidence rates.

    ``X`` holds polarizer-difference angles in degrees (shape ``(n,)`` or
    ``(n, 1)``), ``y`` the rates. Repeated angles are allowed here, unlike
    in :class:`~bellfit.data.CoincidenceDataset`.

    Parameters
    ----------
    weighting : {"uniform", "inverse_variance"}
        ``inverse_variance`` requires ``sigma`` in :meth:`fit`.
    exclude_deg : sequence of float, optional
        Angles dropped before fitting (matched mod 180 deg).

    Attributes
    ----------
    mean_rate_, visibility_, phase_ : float
        Fitted amplitude, visibility and phase (radians).
    coef_ : ndarray of shape (3,)
        Coefficients of ``1, cos 2phi, sin 2phi``.
    """

    def __init__(self, weighting="uniform", exclude_deg=None):
        self.weighting = weighting
        self.exclude_deg = exclude_deg

    def _angles(self, X):
        X = check_array(X, ensure_2d=False)
        if X.ndim == 2:
            if X.shape[1] != 1:
                raise ValueError(f"expected a single angle column, got {X.shape[1]}")
            X = X[:, 0]
        return np.radians(X)

    def fit(self, X, y, sigma=None):
        X = np.asarray(X, dtype=float)
        X2 = X.reshape(-1, 1) if X.ndim == 1 else X
        X2, y = check_X_y(X2, y, y_numeric=True)
        angles = self._angles(X2)
        if sigma is None:
            if self.weighting == "inverse_variance":
                raise PreconditionError("inverse_variance weighting needs sigma")
            sigma = np.zeros_like(y)
        sigma = np.asarray(sigma, dtype=float)
        keep = np.ones(len(y), dtype=bool)
        for e in self.exclude_deg or ():
            t = canonicalize(math.radians(e))
            dist = np.abs(canonicalize(angles) - t)
            keep &= np.minimum(dist, PI - dist) > 1e-6
        coef, cov = _solve_linear(angles[keep], y[keep], sigma[keep], self.weighting)
        a, v, psi, *_ = _amplitude_phase(coef, cov)
        self.coef_ = coef
        self.coef_cov_ = cov
        self.mean_rate_ = a
        self.visibility_ = v
        self.phase_ = psi
        self.n_features_in_ = 1
        return self

    def fit_dataset(self, d: CoincidenceDataset):
        return self.fit(d.angles_deg, d.rates, d.sigmas)

    def predict(self, X):
        check_is_fitted(self, "coef_")
        return _design(self._angles(X)) @ self.coef_
