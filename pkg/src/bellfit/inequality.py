"""The rms-deviation inequality for two-angle hidden-variable models.

A model of the LHV1 family with detection efficiency ``eta`` can only
reproduce data whose rms deviation from the best cosine law,
``delta_exp``, is at least ``D(eta)``. This module computes the statistic,
the model parameter ``eps`` (closed-form approximation and exact root), the
bound ``D`` in its approximate and lower-bound forms, and the deviation
profile of the model closest to the quantum law.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .data import PI, CoincidenceDataset, EfficiencyContext, fold_angle
from .errors import DomainError, NumericError, PreconditionError
from .fit import CosineFit, _design, fit_cosine, predict_rate

__all__ = [
    "EpsilonSolution",
    "InequalityReport",
    "Verdict",
    "delta_exp",
    "resample_delta_exp",
    "epsilon_approx",
    "epsilon_exact",
    "epsilon_equation_lhs",
    "d_eta_approx",
    "d_eta_lower_bound",
    "deviation_profile",
    "deviation_terms",
    "v_effective",
    "predicted_model_rate",
    "run_inequality_test",
    "find_root",
]

ROOT_TOL = 1e-10
EPS_UPPER = PI / 4 - 1e-6
# above this eps the cubic approximation of D is not trusted
APPROX_VALID_EPS = 0.3


class Verdict(str, enum.Enum):
    VIOLATED = "violated"
    SATISFIED = "satisfied"
    INCONCLUSIVE = "inconclusive"


def _sinc2(x):
    """sin^2(x) / x^2 with the removable singularity filled in."""
    return 1.0 if x == 0 else (math.sin(x) / x) ** 2


def delta_exp(d: CoincidenceDataset, v: float, use_phase: float | None = None) -> float:
    """Rms deviation of ``R / <R>`` from ``1 + v cos(2 phi + psi)``.

    ``psi`` is ``use_phase`` when given, else zero. ``<R>`` is the
    arithmetic mean of the rates.
    """
    if not d.is_uniform_grid():
        raise PreconditionError(
            "delta_exp needs angles on a uniform grid pi k / n")
    if not 0.0 <= v <= 1.05:
        raise PreconditionError(f"visibility {v} outside [0, 1.05]")
    psi = 0.0 if use_phase is None else float(use_phase)
    m = float(np.mean(d.rates))
    dev = d.rates / m - 1.0 - v * np.cos(2.0 * d.angles + psi)
    return float(np.sqrt(np.mean(dev**2)))


def _resample_stream(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, index])))


def resample_delta_exp(d: CoincidenceDataset, resamples: int, seed: int = 0):
    """``delta_exp`` of Gaussian-perturbed copies of ``d``.

    Each copy perturbs every rate by its sigma and refits the visibility
    (uniform weights, psi = 0 in the statistic). Copy ``i`` draws from a
    Philox stream keyed by ``(seed, i)``, so the result does not depend on
    how the loop is split up.
    """
    if resamples < 0:
        raise ValueError("resamples must be >= 0")
    if not d.is_uniform_grid():
        raise PreconditionError("delta_exp needs angles on a uniform grid")
    if resamples == 0:
        return np.zeros(0)
    noise = np.stack([_resample_stream(seed, i).standard_normal(d.n)
                      for i in range(resamples)])
    rates = d.rates[None, :] + noise * d.sigmas[None, :]
    X = _design(d.angles)
    coef = np.linalg.solve(X.T @ X, X.T @ rates.T).T
    v = np.hypot(coef[:, 1], coef[:, 2]) / coef[:, 0]
    m = rates.mean(axis=1)
    dev = rates / m[:, None] - 1.0 - v[:, None] * np.cos(2.0 * d.angles)[None, :]
    return np.sqrt(np.mean(dev**2, axis=1))


@dataclass(frozen=True)
class EpsilonSolution:
    """Model parameter ``eps`` and how it was obtained."""

    value: float
    method: str
    residual: float = 0.0
    degenerate: bool = False

    def __float__(self):
        return self.value

    def to_dict(self):
        return {"value": self.value, "method": self.method,
                "residual": self.residual, "degenerate": self.degenerate}


def epsilon_approx(v: float, eta: float) -> EpsilonSolution:
    """Lowest-order estimate ``(1/sqrt 2) (V - sinc^2(pi eta / 2))_+^(1/2)``."""
    if not 0.0 < eta <= 1.0:
        raise DomainError(f"eta must lie in (0, 1], got {eta}")
    inner = v - _sinc2(PI * eta / 2)
    return EpsilonSolution(math.sqrt(max(inner, 0.0)) / math.sqrt(2.0), "approximate")


def epsilon_equation_lhs(eps):
    """Left side of the exact equation for eps; equals 1 at 0, pi/2 at pi/4."""
    e2 = 2.0 * np.asarray(eps, dtype=float)
    num = PI - e2 + np.sin(e2) * np.cos(e2)
    # cos(2e) [pi - 2e + tan(2e)] written without the tan singularity
    den = (PI - e2) * np.cos(e2) + np.sin(e2)
    out = num / den
    return float(out) if np.ndim(out) == 0 else out


def find_root(f, lo: float, hi: float, ftol: float = ROOT_TOL, maxiter: int = 500):
    """Root of ``f`` on a sign-changing bracket by Illinois regula falsi.

    Falls back to a bisection step whenever the secant step makes poor
    progress. Stops when ``|f(x)| <= ftol`` or the bracket collapses to
    machine precision. Returns ``(x, f(x))``.
    """
    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return lo, flo
    if fhi == 0:
        return hi, fhi
    if (flo > 0) == (fhi > 0):
        raise NumericError(f"no sign change on [{lo}, {hi}]")
    side = 0
    for _ in range(maxiter):
        x = (lo * fhi - hi * flo) / (fhi - flo)
        if not lo < x < hi or (hi - lo) < 1e-300:
            x = 0.5 * (lo + hi)
        fx = f(x)
        if abs(fx) <= ftol:
            return x, fx
        width = hi - lo
        if (fx > 0) == (flo > 0):
            lo, flo = x, fx
            if side == -1:
                fhi *= 0.5
            side = -1
        else:
            hi, fhi = x, fx
            if side == 1:
                flo *= 0.5
            side = 1
        if hi - lo > 0.5 * width:
            mid = 0.5 * (lo + hi)
            fm = f(mid)
            if abs(fm) <= ftol:
                return mid, fm
            if (fm > 0) == (flo > 0):
                lo, flo = mid, fm
            else:
                hi, fhi = mid, fm
            side = 0
        if hi - lo <= 4 * np.finfo(float).eps * max(abs(lo), abs(hi), 1.0):
            x = 0.5 * (lo + hi)
            return x, f(x)
    raise NumericError(f"root not found to {ftol} in {maxiter} iterations")


def epsilon_exact(v: float, eta: float) -> EpsilonSolution:
    """Root in (0, pi/4) of ``lhs(eps) = V (pi eta/2)^2 / sin^2(pi eta/2)``.

    The left side rises monotonically from 1 at eps = 0 to pi/2 at
    eps = pi/4. A right side at or below 1 gives the degenerate solution
    eps = 0; one at or above pi/2 has no root and raises NumericError.
    """
    if not 0.0 < eta <= 1.0:
        raise DomainError(f"eta must lie in (0, 1], got {eta}")
    rhs = v / _sinc2(PI * eta / 2)
    if rhs <= 1.0:
        return EpsilonSolution(0.0, "exact_root", 0.0, degenerate=True)
    top = epsilon_equation_lhs(EPS_UPPER)
    if rhs >= top:
        raise NumericError(
            f"right-hand side {rhs:.6g} exceeds the left side's supremum "
            f"pi/2 = {PI / 2:.6g}; no eps below pi/4 (eta = {eta}, V = {v})")
    root, fx = find_root(lambda e: epsilon_equation_lhs(e) - rhs, 0.0, EPS_UPPER)
    return EpsilonSolution(float(root), "exact_root", abs(float(fx)))


def d_eta_approx(eta: float, eps: float) -> float:
    """Cubic-order bound ``(8 sqrt2 / 3pi) sqrt(2/(3eta) - 1/2 - sinc^4) eps^3``.

    Only meaningful for small eps; see ``d_eta_lower_bound`` otherwise.
    """
    eps = float(eps)
    if eps < 0:
        raise DomainError("eps must be >= 0")
    radicand = 2.0 / (3.0 * eta) - 0.5 - _sinc2(PI * eta / 2) ** 2
    if radicand < 0:
        raise DomainError(
            f"negative radicand {radicand:.3g} at eta = {eta}; use d_eta_lower_bound")
    return 8.0 * math.sqrt(2.0) / (3.0 * PI) * math.sqrt(radicand) * eps**3


def d_eta_lower_bound(eta: float, eps: float) -> float:
    """Lower bound on D valid at any eps in [0, pi/4)."""
    eps = float(eps)
    if not 0.0 <= eps < PI / 4:
        raise DomainError(f"eps must lie in [0, pi/4), got {eps}")
    if not 0.0 < eta <= 1.0:
        raise DomainError(f"eta must lie in (0, 1], got {eta}")
    s2 = math.sin(2 * eps)
    den = 3.0 * ((PI - 2 * eps) * math.cos(2 * eps) + s2)
    return math.sqrt(2.0) * s2**3 / den * _sinc2(PI * eta)


def deviation_terms(phi, eta: float, eps: float):
    """``(alpha, beta, gamma(phi), delta(phi))`` of the deviation profile.

    ``phi`` in radians; folded into [0, pi/2] first.
    """
    phi = fold_angle(phi)
    alpha = 8.0 * float(eps) ** 3 / (3.0 * PI)
    beta = 2.0 * _sinc2(PI * eta / 2)
    gamma = 2.0 * alpha / eta**2 * np.maximum(eta + (2.0 / PI) * np.abs(phi) - 1.0, 0.0)
    delta = alpha * (beta * np.cos(2.0 * np.asarray(phi)) - 1.0) + gamma
    if np.ndim(delta) == 0:
        return alpha, beta, float(gamma), float(delta)
    return alpha, beta, gamma, delta


def deviation_profile(phi, eta: float, eps: float):
    """Deviation ``delta(phi)`` of the closest LHV2 model from the cosine law."""
    return deviation_terms(phi, eta, eps)[3]


def v_effective(v: float, eta: float, eps: float) -> float:
    """Visibility the model mimics: ``(V + alpha beta) / (1 - alpha)``."""
    alpha, beta, _, _ = deviation_terms(0.0, eta, eps)
    if alpha >= 1:
        raise DomainError(f"alpha = {alpha} >= 1")
    return (v + alpha * beta) / (1.0 - alpha)


def predicted_model_rate(f: CosineFit, phi, eta: float, eps: float):
    """Fitted rate plus ``mean_rate * delta(phi)``."""
    return predict_rate(f, phi) + f.mean_rate * deviation_profile(phi, eta, eps)


def decide_verdict(delta, sigma, bound, k) -> Verdict:
    sigma = 0.0 if sigma is None else sigma
    if delta + k * sigma < bound:
        return Verdict.VIOLATED
    if delta - k * sigma >= bound:
        return Verdict.SATISFIED
    return Verdict.INCONCLUSIVE


@dataclass(frozen=True, eq=False)
class InequalityReport:
    """Everything computed for one dataset and efficiency context.

    The verdict compares ``delta_exp`` (psi = 0) with ``d_eta_lower_bound``
    at ``significance_k`` resampled standard deviations.
    """

    delta_exp: float
    delta_exp_phase_corrected: float
    delta_exp_sigma: float | None
    eps_approx: EpsilonSolution
    eps_exact: EpsilonSolution
    d_eta_approx: float | None
    d_eta_lower_bound: float
    context: EfficiencyContext
    fitted: CosineFit
    verdict: Verdict
    significance_k: float = 3.0
    resamples: int = 0
    seed: int = 0

    @property
    def approx_valid(self) -> bool:
        return self.eps_approx.value <= APPROX_VALID_EPS

    def to_dict(self) -> dict:
        return {
            "delta_exp": self.delta_exp,
            "delta_exp_phase_corrected": self.delta_exp_phase_corrected,
            "delta_exp_sigma": self.delta_exp_sigma,
            "eps_approx": self.eps_approx.value,
            "eps_exact": self.eps_exact.value,
            "d_eta_approx": self.d_eta_approx,
            "d_eta_lower_bound": self.d_eta_lower_bound,
            "eta": self.context.eta,
            "family": self.context.family.name,
            "verdict": self.verdict.value,
            "approx_valid": self.approx_valid,
            "significance_k": self.significance_k,
            "resamples": self.resamples,
            "seed": self.seed,
            "fit": self.fitted.to_dict(),
        }


def run_inequality_test(d: CoincidenceDataset, ctx: EfficiencyContext,
                        resamples: int = 10000, seed: int = 0,
                        significance_k: float = 3.0) -> InequalityReport:
    """Fit, evaluate the inequality and decide a three-valued verdict.

    With ``resamples = 0`` no uncertainty is attached and the verdict uses
    the point values.
    """
    if resamples < 0:
        raise ValueError("resamples must be >= 0")
    fitted = fit_cosine(d)
    v = fitted.visibility
    dex = delta_exp(d, v)
    dex_pc = delta_exp(d, v, use_phase=fitted.phase)
    sigma = None
    if resamples > 0:
        sigma = float(np.std(resample_delta_exp(d, resamples, seed), ddof=1))
    eta = ctx.eta
    eps_a = epsilon_approx(v, eta)
    eps_e = epsilon_exact(v, eta)
    try:
        d_a = d_eta_approx(eta, eps_a.value)
    except DomainError:
        d_a = None
    d_lb = d_eta_lower_bound(eta, eps_e.value)
    verdict = decide_verdict(dex, sigma, d_lb, significance_k)
    return InequalityReport(dex, dex_pc, sigma, eps_a, eps_e, d_a, d_lb, ctx,
                            fitted, verdict, significance_k, resamples, seed)
