"""Domain types, dataset I/O and polarization-angle algebra.

Angles are handled as plain floats in radians everywhere in the library.
Datasets additionally keep the degree values they were built from, so that
CSV round trips are exact.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field
from typing import IO, Iterable

import numpy as np

from .errors import DatasetError

__all__ = [
    "DatasetError",
    "Family",
    "EfficiencyContext",
    "CoincidenceDataset",
    "canonicalize",
    "fold_angle",
    "deg",
    "rad",
    "load_dataset",
    "dump_dataset",
    "builtin_reference_dataset",
    "uniform_grid_deg",
]

PI = math.pi

# absolute tolerance for angle comparisons, radians
ANGLE_ATOL = 1e-9


def deg(x):
    return np.degrees(x) if isinstance(x, np.ndarray) else math.degrees(x)


def rad(x):
    return np.radians(x) if isinstance(x, np.ndarray) else math.radians(x)


def canonicalize(phi):
    """Map a polarization angle (radians) into [0, pi).

    Works on scalars and arrays. Values within ``ANGLE_ATOL`` of pi are
    sent to 0 so that 180 deg and 0 deg compare equal.
    """
    out = np.mod(phi, PI)
    out = np.where(np.abs(out - PI) < ANGLE_ATOL, 0.0, out)
    if np.ndim(out) == 0:
        return float(out)
    return out


def fold_angle(phi):
    """Representative of ``phi`` in [0, pi/2].

    Canonicalizes to [0, pi) and reflects anything above pi/2 to
    ``pi - phi``.
    """
    c = canonicalize(phi)
    out = np.where(c > PI / 2, PI - c, c)
    if np.ndim(out) == 0:
        return float(out)
    return out


class Family(enum.IntEnum):
    """Nested LHV model families; a lower value is a larger family.

    ``LHV0 > LHV1 > LHV2 > LHV3 > LHV4`` as sets, so ``a.includes(b)``
    holds exactly when ``a <= b``.
    """

    LHV0 = 0
    LHV1 = 1
    LHV2 = 2
    LHV3 = 3
    LHV4 = 4

    def includes(self, other: "Family") -> bool:
        return self <= other

    @classmethod
    def parse(cls, name) -> "Family":
        if isinstance(name, Family):
            return name
        try:
            return cls[str(name).strip().upper()]
        except KeyError:
            raise ValueError(f"unknown family {name!r}; expected one of "
                             f"{', '.join(f.name for f in cls)}") from None


# detector quantum efficiency is 0.62; LHV2 uses half of it because of the
# post-selection of pairs split between the two stations
FAMILY_ETA = {Family.LHV2: 0.31, Family.LHV3: 0.62, Family.LHV4: 0.62}

FAMILY_DESCRIPTIONS = {
    Family.LHV0: "general local hidden variables, no auxiliary assumption",
    Family.LHV1: "two angular hidden variables; eta is the overall "
                 "efficiency 4<R12>/(R1 + R2)",
    Family.LHV2: "LHV1 with partial fair sampling; eta is half the "
                 "detector quantum efficiency",
    Family.LHV3: "LHV2 restricted to pairs split between stations; eta is "
                 "the detector quantum efficiency",
    Family.LHV4: "LHV3 with the cos 2x + cos 4x hidden-angle density",
}


def family_hierarchy():
    """List of ``(family, eta or None, description)`` from widest to narrowest."""
    return [(f, FAMILY_ETA.get(f), FAMILY_DESCRIPTIONS[f]) for f in Family]


@dataclass(frozen=True)
class EfficiencyContext:
    """Detection efficiency together with the model family it encodes."""

    eta: float
    family: Family = Family.LHV1

    def __post_init__(self):
        object.__setattr__(self, "family", Family.parse(self.family))
        eta = float(self.eta)
        if not (0.0 < eta <= 1.0) or math.isnan(eta):
            raise ValueError(f"eta must lie in (0, 1], got {self.eta!r}")
        object.__setattr__(self, "eta", eta)

    @classmethod
    def for_family(cls, family) -> "EfficiencyContext":
        family = Family.parse(family)
        if family not in FAMILY_ETA:
            raise ValueError(
                f"{family.name} has no fixed efficiency; LHV1 needs the "
                "singles rates (see eta_overall)")
        return cls(FAMILY_ETA[family], family)


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class CoincidenceDataset:
    """Coincidence rates measured at a set of polarizer-difference angles.

    Parameters
    ----------
    angles_deg : sequence of float
        Angle between the polarizers for each point, in degrees.
    rates : sequence of float
        Coincidence rate (counts per accumulation window).
    sigmas : sequence of float
        One-sigma uncertainty of each rate. Zero means exact.
    label : str
        Free text.
    """

    angles_deg: np.ndarray
    rates: np.ndarray
    sigmas: np.ndarray
    label: str = ""
    _angles: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        a = _frozen(self.angles_deg)
        r = _frozen(self.rates)
        s = _frozen(self.sigmas)
        if not (a.ndim == r.ndim == s.ndim == 1) or not (len(a) == len(r) == len(s)):
            raise DatasetError("angles, rates and sigmas must be 1-D and equally long")
        if len(a) < 3:
            raise DatasetError(f"fewer than 3 points ({len(a)})")
        if not np.all(np.isfinite(a) & np.isfinite(r) & np.isfinite(s)):
            raise DatasetError("non-finite value in dataset")
        if np.any(r < 0):
            raise DatasetError(f"negative rate at {a[np.argmax(r < 0)]} deg")
        if np.any(s < 0):
            raise DatasetError(f"negative sigma at {a[np.argmax(s < 0)]} deg")
        canon = canonicalize(np.radians(a))
        for i in range(len(canon)):
            for j in range(i):
                d = abs(canon[i] - canon[j])
                if min(d, PI - d) < ANGLE_ATOL:
                    raise DatasetError(
                        f"duplicate angle: {a[j]} deg and {a[i]} deg are the "
                        "same polarization")
        object.__setattr__(self, "angles_deg", a)
        object.__setattr__(self, "rates", r)
        object.__setattr__(self, "sigmas", s)
        object.__setattr__(self, "_angles", _frozen(np.radians(a)))

    @classmethod
    def from_points(cls, points: Iterable, label: str = "") -> "CoincidenceDataset":
        """Build from ``(angle_deg, rate, sigma)`` triples."""
        pts = list(points)
        if not pts:
            raise DatasetError("fewer than 3 points (0)")
        a, r, s = zip(*pts)
        return cls(a, r, s, label)

    @property
    def angles(self) -> np.ndarray:
        """Angles in radians."""
        return self._angles

    @property
    def n(self) -> int:
        return len(self.rates)

    def __len__(self):
        return self.n

    def __eq__(self, other):
        # the label is free text and does not take part in equality
        if not isinstance(other, CoincidenceDataset):
            return NotImplemented
        return (np.array_equal(self.angles_deg, other.angles_deg)
                and np.array_equal(self.rates, other.rates)
                and np.array_equal(self.sigmas, other.sigmas))

    __hash__ = None

    def points(self):
        return list(zip(self.angles_deg.tolist(), self.rates.tolist(),
                        self.sigmas.tolist()))

    def scaled(self, factor: float) -> "CoincidenceDataset":
        return CoincidenceDataset(self.angles_deg, self.rates * factor,
                                  self.sigmas * abs(factor), self.label)

    def with_rates(self, rates, sigmas=None) -> "CoincidenceDataset":
        return CoincidenceDataset(self.angles_deg, rates,
                                  self.sigmas if sigmas is None else sigmas,
                                  self.label)

    def index_of(self, angle_deg: float):
        """Index of the point at ``angle_deg`` (mod 180), or None."""
        target = canonicalize(math.radians(angle_deg))
        canon = canonicalize(self.angles)
        d = np.abs(canon - target)
        d = np.minimum(d, PI - d)
        i = int(np.argmin(d))
        return i if d[i] < 1e-6 else None

    def grid_offset(self):
        """Offset ``c`` such that the angles are ``c + pi k / n``, else None.

        The order of the points does not matter; only the set of canonical
        angles is compared with the grid.
        """
        n = self.n
        canon = np.sort(canonicalize(self.angles))
        step = PI / n
        gaps = np.diff(np.append(canon, canon[0] + PI))
        if not np.allclose(gaps, step, rtol=0, atol=1e-7):
            return None
        return float(canon[0])

    def is_uniform_grid(self) -> bool:
        return self.grid_offset() is not None


def uniform_grid_deg(n: int, offset_deg: float = 0.0) -> list[float]:
    """The ``n`` angles ``offset + 180 k / n`` in degrees."""
    if n < 1:
        raise ValueError("n must be positive")
    return [offset_deg + 180.0 * k / n for k in range(n)]


_REFERENCE_POINTS = (
    (0.0, 9906.2, 21.0),
    (22.5, 8439.6, 18.6),
    (45.0, 4936.6, 13.6),
    (67.5, 1454.1, 9.0),
    (90.0, 108.0, 8.2),
    (112.5, 1481.3, 11.9),
    (135.0, 4983.5, 14.1),
    (157.5, 8499.2, 19.0),
)

REFERENCE_LABEL = "reference run: coincidence rates vs. polarizer angle"


def builtin_reference_dataset() -> CoincidenceDataset:
    """The eight-angle reference measurement shipped with the package."""
    return CoincidenceDataset.from_points(_REFERENCE_POINTS, REFERENCE_LABEL)


CSV_HEADER = ("angle_deg", "rate", "sigma")


def _parse_float(text, line, column):
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise DatasetError(f"cannot parse {column} value {text!r}", line) from None
    if not math.isfinite(value):
        raise DatasetError(f"non-finite {column} value {text!r}", line)
    return value


def load_dataset(source, format: str = "csv", label: str = "") -> CoincidenceDataset:
    """Read a dataset from a byte or text stream, or from raw bytes/str.

    The CSV must start with the header ``angle_deg,rate,sigma``. Row order
    is preserved.
    """
    if format != "csv":
        raise ValueError(f"unsupported format {format!r}")
    if isinstance(source, (bytes, bytearray)):
        text = bytes(source).decode("utf-8-sig")
    elif isinstance(source, str):
        text = source
    else:
        raw = source.read()
        text = raw.decode("utf-8-sig") if isinstance(raw, (bytes, bytearray)) else raw
    reader = csv.reader(io.StringIO(text, newline=""))
    rows = [(i, row) for i, row in enumerate(reader, start=1)
            if row and any(c.strip() for c in row)]
    if not rows:
        raise DatasetError("empty input")
    line, header = rows[0]
    if tuple(c.strip() for c in header) != CSV_HEADER:
        raise DatasetError(f"expected header {','.join(CSV_HEADER)}, got "
                           f"{','.join(header)}", line)
    points = []
    for line, row in rows[1:]:
        if len(row) != 3:
            raise DatasetError(f"expected 3 fields, got {len(row)}", line)
        a, r, s = (_parse_float(v.strip(), line, c) for v, c in zip(row, CSV_HEADER))
        if r < 0:
            raise DatasetError("negative rate", line)
        if s < 0:
            raise DatasetError("negative sigma", line)
        points.append((a, r, s))
    if len(points) < 3:
        raise DatasetError(f"fewer than 3 points ({len(points)})")
    return CoincidenceDataset.from_points(points, label)


def dump_dataset(d: CoincidenceDataset, stream: IO[str] | None = None) -> str:
    """Serialize to CSV text (LF line endings, shortest round-trip floats)."""
    lines = [",".join(CSV_HEADER)]
    for a, r, s in d.points():
        lines.append(f"{a!r},{r!r},{s!r}")
    text = "\n".join(lines) + "\n"
    if stream is not None:
        stream.write(text)
    return text
