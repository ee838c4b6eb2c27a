"""One-box Carleson testing in the disc, hyperbolic distance and the Bloch predicate."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .kernels import Domain, Point, pseudo_hyperbolic_matrix
from .sequences import CONVERGES, DIVERGES, INDETERMINATE, CountingProfile, RandomSequence

GAMMA_GRID = (0.70, 0.75, 0.80, 0.85, 0.90, 0.95)
ALMOST_SURELY = "almost_surely"
ALMOST_NEVER = "almost_never"
_EXPONENT_TOL = 1e-12
_DISC = Domain.polydisc(1)


@dataclass(frozen=True)
class CarlesonBox:
    """Square over the arc [j, j+1) 2^-level (shifted by half a width) of normalised length 2^-level."""

    level: int
    index: int
    shifted: bool = False

    def __post_init__(self):
        if self.level < 0 or not 0 <= self.index < 2 ** self.level:
            raise InvalidInputError(f"no box {self.index} at level {self.level}")

    @property
    def width(self) -> float:
        return 2.0 ** -self.level

    @property
    def start(self) -> float:
        return (self.index + (0.5 if self.shifted else 0.0)) * self.width % 1.0

    def contains(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        t = (np.angle(z) / (2 * np.pi)) % 1.0
        return (z != 0) & ((t - self.start) % 1.0 < self.width) & (1 - np.abs(z) <= self.width)


def _disc_points(seq) -> np.ndarray:
    if isinstance(seq, RandomSequence):
        if seq.domain != _DISC:
            raise InvalidInputError("one-box testing needs a sequence in the disc")
        return seq.points[:, 0]
    return np.asarray(seq, dtype=complex).reshape(-1)


def _box_index(t: np.ndarray, level: int, shifted: bool) -> np.ndarray:
    scale = 2 ** level
    u = t - (0.5 / scale if shifted else 0.0)
    u = u - np.floor(u)
    return np.minimum(np.floor(u * scale).astype(np.int64), scale - 1)


@dataclass(frozen=True)
class OneboxReport:
    gamma: float
    constant: float
    comparability: float
    rows: list   # (level, grid, max ratio)

    @property
    def all_arcs_bound(self) -> float:
        return self.comparability * self.constant

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["level", "grid", "max_ratio"])
        for row in self.rows:
            w.writerow([row[0], row[1], repr(row[2])])
        return buf.getvalue()


def onebox_report(seq, gamma: float, max_level: int | None = None) -> OneboxReport:
    """sup over both dyadic grids of mu_gamma(S_I) / |I|^gamma, mu_gamma = sum (1-|z_n|^2)^gamma delta_{z_n}."""
    if not 0 < gamma <= 1:
        raise InvalidInputError("gamma must lie in (0, 1]")
    z = _disc_points(seq)
    if max_level is None:
        max_level = int(seq.regions.max(initial=0)) if isinstance(seq, RandomSequence) else 0
    keep = z != 0
    z = z[keep]
    slack = 1 - np.abs(z)
    weight = (1 - np.abs(z) ** 2) ** gamma
    t = (np.angle(z) / (2 * np.pi)) % 1.0
    rows = []
    best = 0.0
    for level in range(max_level + 1):
        width = 2.0 ** -level
        inside = slack <= width
        for grid, shifted in (("plain", False), ("shifted", True)):
            sums = np.bincount(_box_index(t[inside], level, shifted), weights=weight[inside],
                               minlength=2 ** level)
            ratio = float(sums.max(initial=0.0)) / width ** gamma
            rows.append((level, grid, ratio))
            best = max(best, ratio)
    return OneboxReport(gamma, best, 2.0 ** gamma * 2.0, rows)


def onebox_constant(seq, gamma: float, max_level: int | None = None) -> float:
    return onebox_report(seq, gamma, max_level).constant


def arc_measure_ratio(seq, gamma: float, start: float, length: float) -> float:
    """mu_gamma(S_I) / |I|^gamma for an arbitrary arc [start, start + length) (turns)."""
    z = _disc_points(seq)
    z = z[z != 0]
    t = (np.angle(z) / (2 * np.pi)) % 1.0
    inside = ((t - start) % 1.0 < length) & (1 - np.abs(z) <= length)
    return float(np.sum((1 - np.abs(z[inside]) ** 2) ** gamma)) / length ** gamma


def _as_disc(z) -> np.ndarray:
    if isinstance(z, Point):
        if z.domain != _DISC:
            raise InvalidInputError("expected a point of the disc")
        return z.array()
    return np.array([[complex(z)]])


def hyperbolic_distance(z, w) -> float:
    """atanh of the pseudo-hyperbolic distance in the disc."""
    rho = float(pseudo_hyperbolic_matrix(_as_disc(z), _as_disc(w), _DISC)[0, 0])
    return math.atanh(min(rho, 1.0))


def boe_nicolau_count(seq, z, r: float) -> int:
    """#{n : rho(z, z_n) < r}."""
    if not 0 < r < 1:
        raise InvalidInputError("r must lie in (0, 1)")
    pts = _disc_points(seq)
    if len(pts) == 0:
        return 0
    return int(np.sum(pseudo_hyperbolic_matrix(_as_disc(z), pts[:, None], _DISC)[0] < r))


@dataclass(frozen=True)
class BlochClassification:
    verdict: str
    series: str
    exponent: float | None
    partial_sums: np.ndarray


def bloch_profile_classifier(profile: CountingProfile) -> BlochClassification:
    """0-1 verdict for Bloch interpolation: almost surely iff sum N_m^3 2^-2m converges.

    Exponential profiles converge iff 3 beta - 2 < 0; table profiles only get
    partial sums and an indeterminate verdict.
    """
    if profile.d != 1 or profile.shells:
        raise InvalidInputError("the Bloch classifier is defined for profiles in the disc")
    terms = np.array([profile.count((m,)) ** 3 * 2.0 ** (-2 * m)
                      for m in range(profile.truncation_degree + 1)])
    partial = np.cumsum(terms)
    if profile.kind == "table":
        return BlochClassification(INDETERMINATE, INDETERMINATE, None, partial)
    exponent = 3 * max(profile.beta, 0.0) - 2
    if exponent < -_EXPONENT_TOL:
        return BlochClassification(ALMOST_SURELY, CONVERGES, exponent, partial)
    return BlochClassification(ALMOST_NEVER, DIVERGES, exponent, partial)
