"""Two-angle local hidden-variable models and their detection probabilities.

A model is a pair ``(rho, P)``: ``rho(chi1 - chi2)`` is the density of the
hidden polarization angles of a photon pair and ``P(chi - phi)`` the
probability that a photon with hidden angle ``chi`` fires the detector
behind a polarizer at ``phi``. Both are even and pi-periodic, with
``integral of rho over a period = 1/pi`` and ``0 <= P <= 1``.

The detection shapes offered here (cos^2 and windowed step) are modelling
choices of this package; any valid ``P`` may be plugged in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .data import PI, CoincidenceDataset, Family
from .errors import DatasetError
from .quadrature import integrate

__all__ = [
    "UniformDensity",
    "Lhv4Density",
    "GridDensity",
    "CosSquaredDetection",
    "WindowDetection",
    "ConstantDetection",
    "LhvModel",
    "CheckResult",
    "ValidationReport",
    "validate_model",
    "coincidence_probability",
    "single_probability",
    "model_dataset",
    "quantum_dataset",
    "model_from_dict",
]

HALF_PI = PI / 2
NORM_TOL = 1e-8
EVEN_TOL = 1e-12


def _wrap(x):
    """Map into [-pi/2, pi/2)."""
    return np.mod(np.asarray(x, dtype=float) + HALF_PI, PI) - HALF_PI


# -- densities -------------------------------------------------------------

@dataclass(frozen=True)
class UniformDensity:
    """Constant density ``1/pi^2``."""

    breakpoints = ()

    def __call__(self, x):
        return np.full(np.shape(x), 1.0 / PI**2) if np.ndim(x) else 1.0 / PI**2

    def to_dict(self):
        return {"kind": "uniform"}


@dataclass(frozen=True)
class Lhv4Density:
    """``(1/pi^2) [1 + (1 + e) cos 2x + e cos 4x]``, nonnegative for e in [0, 1/3].

    The constructor accepts any ``e`` so that out-of-range parameters can be
    diagnosed by :func:`validate_model`.
    """

    epsilon_param: float

    breakpoints = ()

    @property
    def in_range(self) -> bool:
        return 0.0 <= self.epsilon_param <= 1.0 / 3.0

    def __call__(self, x):
        e = self.epsilon_param
        c = np.cos(2.0 * np.asarray(x, dtype=float))
        # factored form: exactly zero at x = pi/2 for every e
        out = (1.0 + c) * (1.0 - e + 2.0 * e * c) / PI**2
        return float(out) if np.ndim(out) == 0 else out

    def minimum(self):
        """Exact minimum over x and one location where it is attained."""
        e = self.epsilon_param
        # (1 + c)(1 - e + 2 e c) with c = cos 2x in [-1, 1]
        candidates = [-1.0, 1.0]
        if e != 0:
            c_star = -(1.0 + e) / (4.0 * e)
            if -1.0 < c_star < 1.0:
                candidates.append(c_star)
        vals = [(1 + c) * (1 - e + 2 * e * c) / PI**2 for c in candidates]
        i = int(np.argmin(vals))
        return vals[i], 0.5 * math.acos(candidates[i])

    def to_dict(self):
        return {"kind": "lhv4", "epsilon": self.epsilon_param}


@dataclass(frozen=True, eq=False)
class GridDensity:
    """Density sampled on an equally spaced grid over [-90 deg, 90 deg].

    ``samples`` include both end points, which must coincide (period pi).
    Values in between come from a periodic cubic spline.
    """

    samples: tuple
    renormalize: bool = False
    _spline: CubicSpline = field(init=False, repr=False)

    breakpoints = ()

    def __post_init__(self):
        y = np.asarray(self.samples, dtype=float)
        if y.ndim != 1 or len(y) < 5:
            raise DatasetError("grid density needs at least 5 samples")
        if not np.all(np.isfinite(y)):
            raise DatasetError("grid density has non-finite samples")
        if abs(y[0] - y[-1]) > 1e-12 * max(1.0, abs(y).max()):
            raise DatasetError("grid density must take equal values at -90 and 90 deg")
        y = y.copy()
        y[-1] = y[0]
        x = np.linspace(-HALF_PI, HALF_PI, len(y))
        spline = CubicSpline(x, y, bc_type="periodic")
        if self.renormalize:
            total = float(spline.integrate(-HALF_PI, HALF_PI))
            if total <= 0:
                raise DatasetError("cannot renormalize a density with nonpositive integral")
            spline = CubicSpline(x, y / (PI * total), bc_type="periodic")
        object.__setattr__(self, "samples", tuple(y.tolist()))
        object.__setattr__(self, "_spline", spline)

    def __call__(self, x):
        out = self._spline(_wrap(x))
        return float(out) if np.ndim(out) == 0 else out

    def to_dict(self):
        return {"kind": "grid", "samples": list(self.samples),
                "renormalize": self.renormalize}


# -- detection probabilities -----------------------------------------------

@dataclass(frozen=True)
class CosSquaredDetection:
    """``P(x) = eta_d cos^2 x`` (Malus law scaled by a detector efficiency)."""

    eta_d: float

    breakpoints = ()

    def __call__(self, x):
        out = self.eta_d * np.cos(np.asarray(x, dtype=float)) ** 2
        return float(out) if np.ndim(out) == 0 else out

    def to_dict(self):
        return {"kind": "cos2", "eta_d": self.eta_d}


@dataclass(frozen=True)
class WindowDetection:
    """``P(x) = eta_d`` when the folded angle ``|x| <= w``, else 0 (``w`` in radians)."""

    eta_d: float
    w: float

    @property
    def breakpoints(self):
        return (-self.w, self.w) if 0 < self.w < HALF_PI else ()

    def __call__(self, x):
        out = np.where(np.abs(_wrap(x)) <= self.w, self.eta_d, 0.0)
        return float(out) if np.ndim(out) == 0 else out

    def to_dict(self):
        return {"kind": "window", "eta_d": self.eta_d, "w_deg": math.degrees(self.w)}


@dataclass(frozen=True)
class ConstantDetection:
    """Angle-independent detection probability ``q``."""

    q: float

    breakpoints = ()

    def __call__(self, x):
        return np.full(np.shape(x), float(self.q)) if np.ndim(x) else float(self.q)

    def to_dict(self):
        return {"kind": "constant", "eta_d": self.q}


@dataclass(frozen=True)
class LhvModel:
    """A ``(rho, P)`` pair plus the family it is meant to belong to."""

    rho: object
    detection: object
    family: Family = Family.LHV1

    def __post_init__(self):
        object.__setattr__(self, "family", Family.parse(self.family))

    def to_dict(self):
        return {"rho": self.rho.to_dict(), "detection": self.detection.to_dict(),
                "family": self.family.name}


def model_from_dict(spec: dict) -> LhvModel:
    """Build a model from its JSON description.

    ``{"rho": {"kind": "uniform" | "lhv4" | "grid", ...},
    "detection": {"kind": "cos2" | "window" | "constant", "eta_d": ..., "w_deg": ...},
    "family": "LHV3"}``
    """
    try:
        r = spec["rho"]
        kind = r["kind"]
        if kind == "uniform":
            rho = UniformDensity()
        elif kind == "lhv4":
            rho = Lhv4Density(float(r.get("epsilon", r.get("epsilon_param"))))
        elif kind == "grid":
            rho = GridDensity(tuple(float(v) for v in r["samples"]),
                              bool(r.get("renormalize", False)))
        else:
            raise DatasetError(f"unknown rho kind {kind!r}")
        p = spec["detection"]
        kind = p["kind"]
        eta_d = float(p.get("eta_d", 1.0))
        if kind == "cos2":
            det = CosSquaredDetection(eta_d)
        elif kind == "window":
            det = WindowDetection(eta_d, math.radians(float(p["w_deg"])))
        elif kind == "constant":
            det = ConstantDetection(eta_d)
        else:
            raise DatasetError(f"unknown detection kind {kind!r}")
        family = Family.parse(spec.get("family", "LHV1"))
    except (KeyError, TypeError) as exc:
        raise DatasetError(f"malformed model specification: missing or bad {exc}") from None
    except ValueError as exc:
        if isinstance(exc, DatasetError):
            raise
        raise DatasetError(f"malformed model specification: {exc}") from None
    return LhvModel(rho, det, family)


# -- validation ------------------------------------------------------------

@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    worst: float
    location: float | None = None
    message: str = ""

    def to_dict(self):
        return {"name": self.name, "passed": self.passed, "worst": self.worst,
                "location_deg": None if self.location is None else math.degrees(self.location),
                "message": self.message}


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self):
        return [c for c in self.checks if not c.passed]

    def __getitem__(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self):
        return {"status": "pass" if self.passed else "fail",
                "checks": [c.to_dict() for c in self.checks]}

    def summary(self) -> str:
        if self.passed:
            return "pass"
        return "; ".join(c.message for c in self.failures)


def _worst(values, x, bad):
    i = int(np.argmax(bad))
    return float(values[i]), float(x[i])


def validate_model(m: LhvModel, grid_points: int = 1024) -> ValidationReport:
    """Check ``rho >= 0``, evenness, ``integral rho = 1/pi`` and ``0 <= P <= 1``.

    Pointwise checks use ``grid_points`` equally spaced points on
    [-pi/2, pi/2]; the normalization uses adaptive quadrature.
    """
    if grid_points < 64:
        raise ValueError("grid_points must be >= 64")
    x = np.linspace(-HALF_PI, HALF_PI, grid_points)
    checks = []

    rho = np.asarray(m.rho(x), dtype=float)
    if isinstance(m.rho, Lhv4Density):
        e = m.rho.epsilon_param
        ok = m.rho.in_range
        checks.append(CheckResult(
            "rho_parameter_range", ok, e, None,
            "" if ok else f"lhv4 epsilon {e:g} outside [0, 1/3]"))
    neg = rho < -1e-15
    if neg.any():
        val, loc = _worst(rho, x, rho == rho.min())
        if isinstance(m.rho, Lhv4Density):
            val, loc = m.rho.minimum()
        checks.append(CheckResult(
            "rho_nonnegative", False, val, loc,
            f"rho is negative (min {val:.3g} at {math.degrees(loc):.2f} deg)"))
    else:
        checks.append(CheckResult("rho_nonnegative", True, float(rho.min()),
                                  float(x[np.argmin(rho)])))

    asym = np.abs(rho - np.asarray(m.rho(-x), dtype=float))
    i = int(np.argmax(asym))
    ok = asym[i] <= EVEN_TOL
    checks.append(CheckResult("rho_even", bool(ok), float(asym[i]), float(x[i]),
                              "" if ok else f"rho not even (|rho(x) - rho(-x)| = {asym[i]:.3g})"))

    total = integrate(m.rho, -HALF_PI, HALF_PI, m.rho.breakpoints, tol=1e-11)
    err = abs(total - 1.0 / PI)
    ok = err <= NORM_TOL
    checks.append(CheckResult("rho_normalization", bool(ok), float(err), None,
                              "" if ok else f"integral of rho is {total:.10g}, expected 1/pi"))

    p = np.asarray(m.detection(x), dtype=float)
    bad = (p < 0) | (p > 1)
    if bad.any():
        dev = np.maximum(-p, p - 1)
        i = int(np.argmax(dev))
        checks.append(CheckResult("detection_bounds", False, float(p[i]), float(x[i]),
                                  f"P = {p[i]:.3g} outside [0, 1]"))
    else:
        checks.append(CheckResult("detection_bounds", True, float(np.max(np.abs(p - 0.5))), None))

    asym = np.abs(p - np.asarray(m.detection(-x), dtype=float))
    i = int(np.argmax(asym))
    ok = asym[i] <= EVEN_TOL
    checks.append(CheckResult("detection_even", bool(ok), float(asym[i]), float(x[i]),
                              "" if ok else "P not even"))
    return ValidationReport(tuple(checks))


# -- probabilities ---------------------------------------------------------

_CHUNK = 256


def _convolution(m: LhvModel, u, tol):
    """``C(u) = integral P(y) rho(u - y) dy`` over one period, batched over ``u``."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    p_bp = m.detection.breakpoints

    def integrand(y):
        return m.detection(y)[None, :] * m.rho(u[:, None] - y[None, :])

    return integrate(integrand, -HALF_PI, HALF_PI, p_bp, tol=tol)


def coincidence_probability(m: LhvModel, phi1: float, phi2: float, tol: float = 1e-9) -> float:
    """Probability that both detectors fire, polarizers at ``phi1`` and ``phi2``.

    Integrates ``P(chi1 - phi1) C(chi1 - phi2)`` over one period of
    ``chi1``, where ``C`` is the convolution of ``rho`` with ``P`` taken
    over the relative angle.
    """
    inner_tol = tol / (4.0 * PI)

    def outer(chi1):
        out = np.empty(len(chi1))
        for s in range(0, len(chi1), _CHUNK):
            block = chi1[s:s + _CHUNK]
            out[s:s + _CHUNK] = (m.detection(block - phi1)
                                 * _convolution(m, block - phi2, inner_tol))
        return out

    bp = [phi1 + b for b in m.detection.breakpoints]
    return float(integrate(outer, phi1 - HALF_PI, phi1 + HALF_PI, bp, tol=tol / 2))


def single_probability(m: LhvModel, phi: float = 0.0, tol: float = 1e-9) -> float:
    """Probability that one detector fires; independent of ``phi``."""
    p_int = integrate(lambda c: m.detection(c - phi), phi - HALF_PI, phi + HALF_PI,
                      [phi + b for b in m.detection.breakpoints], tol=tol / 4)
    rho_int = integrate(m.rho, -HALF_PI, HALF_PI, m.rho.breakpoints, tol=tol / 4)
    return float(p_int * rho_int)


def model_dataset(m: LhvModel, angles_deg, production_rate: float,
                  label: str = "") -> CoincidenceDataset:
    """Noise-free rates ``production_rate * p12`` at each angle difference.

    The polarizers sit at ``phi1 = 0`` and ``phi2 = -phi``.
    """
    if not production_rate > 0:
        raise ValueError("production_rate must be positive")
    angles_deg = [float(a) for a in angles_deg]
    rates = [production_rate * coincidence_probability(m, 0.0, -math.radians(a))
             for a in angles_deg]
    return CoincidenceDataset(angles_deg, rates, [0.0] * len(rates), label)


def quantum_dataset(v: float, psi: float, mean: float, angles_deg,
                    label: str = "") -> CoincidenceDataset:
    """Exact cosine-law rates ``mean [1 + v cos(2 phi + psi)]`` (psi in radians)."""
    if abs(v) > 1:
        raise ValueError("|v| must be <= 1")
    if not mean > 0:
        raise ValueError("mean must be positive")
    a = np.asarray([float(x) for x in angles_deg])
    rates = mean * (1.0 + v * np.cos(2.0 * np.radians(a) + psi))
    rates = np.maximum(rates, 0.0)
    return CoincidenceDataset(a, rates, np.zeros_like(rates), label)
