"""Seeded event-level simulation of photon-pair runs.

Random numbers come from numpy's Philox counter-based generator. Every unit
of work has its own stream, keyed by ``SeedSequence([seed, angle_index,
block_index])`` for model runs and ``SeedSequence([seed, angle_index])``
for quantum runs, so results do not depend on how the work is scheduled.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import PI, CoincidenceDataset
from .errors import DomainError, PreconditionError

__all__ = [
    "SimulationConfig",
    "SimulationResult",
    "rejection_bound",
    "sample_hidden_pair",
    "sample_hidden_pairs",
    "simulate",
    "simulate_run",
    "simulate_quantum",
    "stream",
]

BLOCK_SIZE = 1 << 16
NOISE_MODELS = ("bernoulli_counts", "poisson_rates")
# key used for the per-angle pair-count draw under poisson_rates
_COUNT_KEY = 0xFFFFFFFF


def stream(*key: int) -> np.random.Generator:
    """Philox generator for the given integer key."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(list(key))))


@dataclass(frozen=True)
class SimulationConfig:
    """Run parameters.

    ``noise="bernoulli_counts"`` emits exactly ``pairs_per_angle`` pairs per
    angle; ``"poisson_rates"`` draws the number of pairs from a Poisson law
    with that mean.
    """

    pairs_per_angle: int
    angles_deg: tuple
    seed: int = 0
    noise: str = "bernoulli_counts"

    def __post_init__(self):
        if int(self.pairs_per_angle) < 1:
            raise ValueError("pairs_per_angle must be >= 1")
        angles = tuple(float(a) for a in self.angles_deg)
        if not angles:
            raise ValueError("angles must be nonempty")
        if self.noise not in NOISE_MODELS:
            raise ValueError(f"noise must be one of {NOISE_MODELS}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "pairs_per_angle", int(self.pairs_per_angle))
        object.__setattr__(self, "angles_deg", angles)
        object.__setattr__(self, "seed", int(self.seed))

    @classmethod
    def from_dict(cls, spec: dict) -> "SimulationConfig":
        return cls(spec["pairs_per_angle"], tuple(spec["angles_deg"]),
                   spec.get("seed", 0), spec.get("noise", "bernoulli_counts"))

    def to_dict(self):
        return {"pairs_per_angle": self.pairs_per_angle,
                "angles_deg": list(self.angles_deg), "seed": self.seed,
                "noise": self.noise}


@dataclass(frozen=True, eq=False)
class SimulationResult:
    dataset: CoincidenceDataset
    pairs: np.ndarray
    singles1: np.ndarray
    singles2: np.ndarray
    seed: int
    config: dict = field(default_factory=dict)

    def sidecar(self) -> dict:
        return {
            "seed": self.seed,
            "angles_deg": self.dataset.angles_deg.tolist(),
            "pairs": self.pairs.tolist(),
            "singles1": self.singles1.tolist(),
            "singles2": self.singles2.tolist(),
            "coincidences": self.dataset.rates.tolist(),
            "config": self.config,
        }


def rejection_bound(m, grid_points: int = 4096, safety: float = 1.001) -> float:
    """Envelope for the relative-angle density ``pi rho(x)`` on [-pi/2, pi/2]."""
    x = np.linspace(-PI / 2, PI / 2, grid_points)
    bound = safety * float(np.max(PI * np.asarray(m.rho(x))))
    if not bound > 0:
        raise PreconditionError("rho has no positive values; cannot sample")
    return bound


def _relative_angles(m, rng, size, bound):
    out = np.empty(size)
    filled = 0
    while filled < size:
        need = size - filled
        batch = max(64, int(need * bound * 1.2) + 16)
        x = rng.uniform(-PI / 2, PI / 2, batch)
        u = rng.uniform(0.0, bound, batch)
        acc = x[u < PI * np.asarray(m.rho(x))]
        take = min(len(acc), need)
        out[filled:filled + take] = acc[:take]
        filled += take
    return out


def sample_hidden_pairs(m, rng: np.random.Generator, size: int, bound: float | None = None):
    """Draw ``size`` hidden angle pairs ``(chi1, chi2)`` in [0, pi).

    ``chi1`` is uniform; the relative angle ``x = chi1 - chi2`` follows
    ``pi rho(x)`` and is drawn by rejection.
    """
    if bound is None:
        bound = rejection_bound(m)
    chi1 = rng.uniform(0.0, PI, size)
    x = _relative_angles(m, rng, size, bound)
    chi2 = np.mod(chi1 - x, PI)
    return chi1, chi2


def sample_hidden_pair(m, rng: np.random.Generator):
    chi1, chi2 = sample_hidden_pairs(m, rng, 1)
    return float(chi1[0]), float(chi2[0])


def _run_block(m, bound, seed, k, b, size, phi1, phi2):
    rng = stream(seed, k, b)
    chi1, chi2 = sample_hidden_pairs(m, rng, size, bound)
    d1 = rng.random(size) < m.detection(chi1 - phi1)
    d2 = rng.random(size) < m.detection(chi2 - phi2)
    return int(np.count_nonzero(d1 & d2)), int(np.count_nonzero(d1)), int(np.count_nonzero(d2))


def simulate_run(m, cfg: SimulationConfig, workers: int = 1) -> SimulationResult:
    """Simulate coincidences and singles for every configured angle.

    Polarizer 1 sits at 0 and polarizer 2 at ``-phi``, so the difference is
    ``phi``. Detection on the two sides is independent given the hidden
    angles. ``workers > 1`` fans blocks out over threads; the output is the
    same as with one worker.
    """
    bound = rejection_bound(m)
    tasks = []
    pairs = []
    for k, a in enumerate(cfg.angles_deg):
        n = cfg.pairs_per_angle
        if cfg.noise == "poisson_rates":
            n = int(stream(cfg.seed, k, _COUNT_KEY).poisson(n))
        pairs.append(n)
        phi2 = -math.radians(a)
        for b, start in enumerate(range(0, n, BLOCK_SIZE)):
            tasks.append((k, (m, bound, cfg.seed, k, b, min(BLOCK_SIZE, n - start), 0.0, phi2)))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(lambda t: _run_block(*t[1]), tasks))
    else:
        results = [_run_block(*t[1]) for t in tasks]
    nk = len(cfg.angles_deg)
    coinc = np.zeros(nk, dtype=np.int64)
    s1 = np.zeros(nk, dtype=np.int64)
    s2 = np.zeros(nk, dtype=np.int64)
    for (k, _), (c, a1, a2) in zip(tasks, results):
        coinc[k] += c
        s1[k] += a1
        s2[k] += a2
    ds = CoincidenceDataset(cfg.angles_deg, coinc.astype(float),
                            np.sqrt(coinc.astype(float)), "simulated lhv model")
    return SimulationResult(ds, np.array(pairs), s1, s2, cfg.seed, cfg.to_dict())


def simulate(m, cfg: SimulationConfig, workers: int = 1) -> CoincidenceDataset:
    """Coincidence dataset of a simulated run; see :func:`simulate_run`."""
    return simulate_run(m, cfg, workers).dataset


def simulate_quantum(v: float, psi: float, mean: float, cfg: SimulationConfig) -> CoincidenceDataset:
    """Poisson counts around ``mean [1 + v cos(2 phi + psi)]`` (psi in radians)."""
    if abs(v) > 1:
        raise DomainError("|v| must be <= 1")
    counts = []
    for k, a in enumerate(cfg.angles_deg):
        lam = mean * (1.0 + v * math.cos(2.0 * math.radians(a) + psi))
        if lam < 0:
            if lam > -1e-9 * abs(mean):
                lam = 0.0
            else:
                raise DomainError(f"negative mean rate {lam} at {a} deg")
        counts.append(float(stream(cfg.seed, k).poisson(lam)))
    counts = np.array(counts)
    return CoincidenceDataset(cfg.angles_deg, counts, np.sqrt(counts), "simulated quantum law")
