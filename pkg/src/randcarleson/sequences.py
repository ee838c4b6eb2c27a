"""Dyadic regions, counting profiles and seeded random sequences.

Polydisc regions are indexed by multi-indices m = (m_1, ..., m_d) with
``2^-(m_i+1) <= 1 - |z_i| < 2^-m_i``; ball shells by a scalar m applied to
``1 - |z|``.  The m = 0 band is closed at the top so the origin is
classified (``1 - |z| = 1`` gives m = 0).

Randomness: every sequence is a pure function of (profile, placement, seed).
Sub-streams are derived with :func:`derive_seed`, a keyed BLAKE2b hash, and
fed to a counter-based Philox generator, so results do not depend on
scheduling order.
"""
from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import dataclass, field
from math import comb
from typing import Iterator, Mapping

import numpy as np

from .errors import InvalidInputError, ResourceLimitError
from .kernels import BALL, POLYDISC, Domain, Point, as_points

DEFAULT_POINT_CAP = 200_000

MIDPOINT = "midpoint"
UNIFORM_IN_BAND = "uniform_in_band"
PLACEMENTS = (MIDPOINT, UNIFORM_IN_BAND)
EXPLICIT = "explicit"   # points supplied by the caller

# keeps UniformInBand draws strictly inside their band after rounding
_BAND_MARGIN = 2.0 ** -30


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from a tuple of ints/strings/floats.

    ``derive_seed(base_seed, trial_index)`` is the documented stream-splitting
    rule; any further labels (experiment id, depth) are appended.
    """
    h = hashlib.blake2b(digest_size=8, person=b"randcarleson")
    for p in parts:
        h.update(repr(p).encode())
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little")


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed) & (2**64 - 1)))


@dataclass(frozen=True, order=True)
class DyadicIndex:
    m: tuple

    def __post_init__(self):
        m = tuple(int(v) for v in self.m)
        if any(v < 0 for v in m):
            raise InvalidInputError(f"dyadic indices are nonnegative, got {m}")
        object.__setattr__(self, "m", m)

    @property
    def degree(self) -> int:
        return sum(self.m)

    def __iter__(self):
        return iter(self.m)

    def __len__(self):
        return len(self.m)


def band_index(slack) -> np.ndarray:
    """Dyadic band m with 2^-(m+1) <= slack < 2^-m (closed at slack = 1)."""
    x = np.asarray(slack, dtype=float)
    if np.any((x <= 0) | (x > 1)):
        raise InvalidInputError("band slack 1 - |z| must lie in (0, 1]")
    m = np.maximum(np.ceil(-np.log2(x)).astype(np.int64) - 1, 0)
    # exact corrections for rounding in log2 near band edges
    low = x < np.ldexp(1.0, -(m + 1))
    m = m + low
    high = (x >= np.ldexp(1.0, -m)) & (m > 0)
    return m - high


def region_indices(z, domain: Domain) -> np.ndarray:
    """Region labels for an (n, d) array: (n, d) for the polydisc, (n, 1) for the ball."""
    Z = as_points(z, domain)
    if domain.kind == POLYDISC:
        return band_index(1.0 - np.abs(Z))
    return band_index(1.0 - np.sqrt(np.sum(np.abs(Z) ** 2, axis=1)))[:, None]


def region_of_point(z: Point) -> DyadicIndex:
    return DyadicIndex(tuple(region_indices(z.array(), z.domain)[0]))


def multi_indices(degree: int, d: int) -> Iterator[tuple]:
    """All m in N^d with |m| = degree, lexicographically decreasing in m_1."""
    if d == 1:
        yield (degree,)
        return
    for first in range(degree, -1, -1):
        for rest in multi_indices(degree - first, d - 1):
            yield (first,) + rest


def _robust_ceil(x: float) -> int:
    k = round(x)
    if abs(x - k) <= 1e-9 * max(1.0, abs(x)):
        return int(k)
    return math.ceil(x)


@dataclass(frozen=True)
class CountingProfile:
    """Prescribed number of points N_m per dyadic region.

    Either ``Exponential``: N_m = ceil(C 2^(beta |m|)) for |m| <= truncation,
    or ``Table``: an explicit map m -> N_m.  ``shells=True`` marks a ball
    profile with scalar shell indices.
    """

    d: int
    truncation_degree: int
    C: float | None = None
    beta: float | None = None
    table: Mapping | None = None
    shells: bool = False

    def __post_init__(self):
        if self.d < 1 or self.truncation_degree < 0:
            raise InvalidInputError("profile needs d >= 1 and truncation_degree >= 0")
        if self.table is None:
            if self.C is None or self.beta is None or not self.C > 0:
                raise InvalidInputError("exponential profile needs C > 0 and beta")
        else:
            k = self.index_dim
            clean = {}
            for key, n in dict(self.table).items():
                key = (int(key),) if np.isscalar(key) else tuple(int(v) for v in key)
                if len(key) != k or any(v < 0 for v in key):
                    raise InvalidInputError(f"bad table index {key} for index dimension {k}")
                if not (isinstance(n, (int, np.integer)) and n >= 0):
                    raise InvalidInputError(f"table counts must be nonnegative integers, got {n!r}")
                if n:
                    clean[key] = int(n)
            object.__setattr__(self, "table", clean)

    @classmethod
    def exponential(cls, C: float, beta: float, d: int, depth: int, shells: bool = False):
        return cls(d=d, truncation_degree=depth, C=float(C), beta=float(beta), shells=shells)

    @classmethod
    def from_table(cls, table: Mapping, d: int, shells: bool = False):
        degrees = [sum(k) if not np.isscalar(k) else int(k) for k in table] or [0]
        return cls(d=d, truncation_degree=max(degrees), table=dict(table), shells=shells)

    @property
    def kind(self) -> str:
        return "table" if self.table is not None else "exponential"

    @property
    def index_dim(self) -> int:
        return 1 if self.shells else self.d

    @property
    def domain(self) -> Domain:
        return Domain(BALL if self.shells else POLYDISC, self.d)

    def count(self, m) -> int:
        m = tuple(m)
        if len(m) != self.index_dim:
            raise InvalidInputError(f"index {m} has wrong dimension")
        deg = sum(m)
        if self.table is not None:
            return self.table.get(m, 0)
        if deg > self.truncation_degree:
            return 0
        return _robust_ceil(self.C * 2.0 ** (self.beta * deg))

    def degree_count(self, degree: int) -> int:
        """Number of indices with the given degree."""
        return comb(degree + self.index_dim - 1, self.index_dim - 1)

    def counts(self) -> list[tuple[tuple, int]]:
        """Nonzero (index, N_m) pairs in generation order: by degree, then index."""
        if self.table is not None:
            keys = sorted(self.table, key=lambda k: (sum(k), tuple(-v for v in k)))
            return [(k, self.table[k]) for k in keys]
        out = []
        for s in range(self.truncation_degree + 1):
            n = self.count((s,) + (0,) * (self.index_dim - 1))
            if n:
                out.extend((m, n) for m in multi_indices(s, self.index_dim))
        return out

    def total(self) -> int:
        return sum(n for _, n in self.counts())

    def with_depth(self, depth: int) -> "CountingProfile":
        if self.table is not None:
            return CountingProfile.from_table(
                {k: v for k, v in self.table.items() if sum(k) <= depth}, self.d, self.shells)
        return CountingProfile(self.d, depth, self.C, self.beta, None, self.shells)

    def to_dict(self) -> dict:
        out = {"d": self.d, "truncation_degree": self.truncation_degree, "shells": self.shells}
        if self.table is not None:
            out["table"] = [[list(k), n] for k, n in self.counts()]
        else:
            out.update(C=self.C, beta=self.beta)
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> "CountingProfile":
        if "table" in data:
            table = {tuple(k): int(n) for k, n in data["table"]}
            return cls(d=int(data["d"]), truncation_degree=int(data["truncation_degree"]),
                       table=table, shells=bool(data.get("shells", False)))
        return cls(d=int(data["d"]), truncation_degree=int(data["truncation_degree"]),
                   C=float(data["C"]), beta=float(data["beta"]), shells=bool(data.get("shells", False)))


def prune_profile(profile: CountingProfile, exponent: float) -> CountingProfile:
    """Cap N_m at ceil(2^(exponent |m|)).

    With ``exponent < 1`` the pruned profile has N_m 2^-|m| -> 0, the
    reduction used when exhibiting clusters in the divergent regime.
    """
    table = {m: min(n, _robust_ceil(2.0 ** (exponent * sum(m)))) for m, n in profile.counts()}
    return CountingProfile.from_table(table, profile.d, profile.shells)


def _midpoint_radius(m: np.ndarray) -> np.ndarray:
    return 1.0 - 3.0 * np.ldexp(1.0, -(m + 2))


def _region_array(profile: CountingProfile, cap: int) -> np.ndarray:
    counts = profile.counts()
    total = sum(n for _, n in counts)
    if total > cap:
        raise ResourceLimitError("points in sequence", total, cap)
    if not counts:
        return np.zeros((0, profile.index_dim), dtype=np.int64)
    return np.repeat(np.array([m for m, _ in counts], dtype=np.int64),
                     [n for _, n in counts], axis=0)


def _radii(regions: np.ndarray, placement: str, seed) -> np.ndarray:
    if placement == MIDPOINT:
        return _midpoint_radius(regions)
    if placement == UNIFORM_IN_BAND:
        if seed is None:
            raise InvalidInputError("uniform_in_band placement needs a seed")
        u = make_rng(derive_seed(seed, "radii")).random(regions.shape)
        u = np.clip(u, _BAND_MARGIN, 1.0 - _BAND_MARGIN)
        return 1.0 - np.ldexp(1.0 + u, -(regions + 1))
    raise InvalidInputError(f"unknown placement {placement!r}")


def radii_from_profile(profile: CountingProfile, placement: str = MIDPOINT, seed=None,
                       cap: int = DEFAULT_POINT_CAP) -> list[tuple[DyadicIndex, np.ndarray]]:
    """Exactly N_m radius tuples per index, in generation order."""
    regions = _region_array(profile, cap)
    radii = _radii(regions, placement, seed)
    return [(DyadicIndex(tuple(m)), r) for m, r in zip(regions, radii)]


@dataclass(frozen=True, eq=False)
class RandomSequence:
    """A realised finite random sequence with its region labels."""

    points: np.ndarray
    regions: np.ndarray
    domain: Domain
    seed: int | None = None
    profile: CountingProfile | None = None
    placement: str = MIDPOINT
    _cache: dict = field(default_factory=dict, repr=False)

    def __len__(self):
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.domain.d

    @property
    def degrees(self) -> np.ndarray:
        return self.regions.sum(axis=1)

    @property
    def radii(self) -> np.ndarray:
        """Per-point radii: coordinate moduli (polydisc) or |z| (ball), shape (n, k)."""
        if self.domain.kind == POLYDISC:
            return np.abs(self.points)
        return np.sqrt(np.sum(np.abs(self.points) ** 2, axis=1))[:, None]

    @property
    def nominal_radii(self) -> np.ndarray:
        """Band-midpoint radii for midpoint placement, otherwise the actual radii."""
        if self.placement == MIDPOINT:
            return _midpoint_radius(self.regions)
        return self.radii

    @property
    def angles(self) -> np.ndarray:
        """Arguments as fractions of a turn in [0, 1), shape (n, d) (polydisc only)."""
        if self.domain.kind != POLYDISC:
            raise InvalidInputError("angles are defined for polydisc sequences")
        if "angles" not in self._cache:
            t = np.angle(self.points) / (2 * np.pi)
            t = np.where(t < 0, t + 1.0, t)
            self._cache["angles"] = np.where(t >= 1.0, 0.0, t)
        return self._cache["angles"]

    @classmethod
    def from_points(cls, points, domain: Domain) -> "RandomSequence":
        """Wrap explicit points, labelling each with its dyadic region."""
        pts = as_points(points, domain)
        return cls(pts, region_indices(pts, domain), domain, placement=EXPLICIT)

    def point(self, i: int) -> Point:
        return Point(tuple(self.points[i]), self.domain)

    def subset(self, index) -> "RandomSequence":
        index = np.asarray(index)
        return RandomSequence(self.points[index], self.regions[index], self.domain,
                              self.seed, self.profile, self.placement)

    def region_counts(self) -> dict:
        out: dict = {}
        for m in map(tuple, self.regions):
            out[m] = out.get(m, 0) + 1
        return out

    # -- line-oriented text format ----------------------------------------
    def dumps(self) -> str:
        lines = [
            "# randcarleson-sequence 1",
            f"# domain {self.domain.kind}",
            f"# d {self.d}",
            f"# seed {'none' if self.seed is None else self.seed}",
            f"# placement {self.placement}",
            "# profile " + ("none" if self.profile is None else json.dumps(self.profile.to_dict(), sort_keys=True)),
        ]
        for z, m in zip(self.points, self.regions):
            coords = " ".join(f"{float(c.real)!r} {float(c.imag)!r}" for c in z)
            lines.append(f"{coords} | {' '.join(str(int(v)) for v in m)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "RandomSequence":
        header = {}
        rows = []
        for line in text.splitlines():
            if not line.strip():
                continue
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition(" ")
                header[key] = value
                continue
            left, _, right = line.partition("|")
            try:
                rows.append(([float(v) for v in left.split()], [int(v) for v in right.split()]))
            except ValueError as exc:
                raise InvalidInputError(f"malformed sequence line {line!r}") from exc
        if header.get("randcarleson-sequence") != "1":
            raise InvalidInputError("not a randcarleson sequence file")
        domain = Domain(header["domain"], int(header["d"]))
        seed = None if header["seed"] == "none" else int(header["seed"])
        profile = None if header["profile"] == "none" else CountingProfile.from_dict(json.loads(header["profile"]))
        k = domain.d if domain.kind == POLYDISC else 1
        pts = np.array([[complex(v[2 * i], v[2 * i + 1]) for i in range(domain.d)] for v, _ in rows],
                       dtype=complex).reshape(-1, domain.d)
        regs = np.array([m for _, m in rows], dtype=np.int64).reshape(-1, k)
        return cls(pts, regs, domain, seed, profile, header.get("placement", MIDPOINT))


def sample_polydisc(profile: CountingProfile, placement: str = MIDPOINT, seed: int = 0,
                    cap: int = DEFAULT_POINT_CAP) -> RandomSequence:
    """lambda_n = (r^1 e^{2 pi i theta^1}, ..., r^d e^{2 pi i theta^d}), theta i.i.d. uniform."""
    if profile.shells:
        raise InvalidInputError("ball (shell) profile passed to sample_polydisc")
    regions = _region_array(profile, cap)
    radii = _radii(regions, placement, seed)
    theta = make_rng(derive_seed(seed, "angles")).random(regions.shape)
    points = radii * np.exp(2j * np.pi * theta)
    return RandomSequence(points, regions, profile.domain, seed, profile, placement)


def sample_ball(profile: CountingProfile, placement: str = MIDPOINT, seed: int = 0,
                cap: int = DEFAULT_POINT_CAP) -> RandomSequence:
    """lambda_n = r_n xi_n with xi_n uniform on the unit sphere of C^d."""
    if not profile.shells:
        raise InvalidInputError("sample_ball needs a shell profile (shells=True)")
    regions = _region_array(profile, cap)
    radii = _radii(regions, placement, seed)
    g = make_rng(derive_seed(seed, "sphere")).standard_normal((regions.shape[0], 2 * profile.d))
    xi = g[:, : profile.d] + 1j * g[:, profile.d:]
    xi /= np.linalg.norm(xi, axis=1, keepdims=True)
    return RandomSequence(radii * xi, regions, profile.domain, seed, profile, placement)


def sample(profile: CountingProfile, placement: str = MIDPOINT, seed: int = 0,
           cap: int = DEFAULT_POINT_CAP) -> RandomSequence:
    fn = sample_ball if profile.shells else sample_polydisc
    return fn(profile, placement, seed, cap)


# -- series criteria ---------------------------------------------------------

CONVERGES = "converges"
DIVERGES = "diverges"
INDETERMINATE = "indeterminate"
_EXPONENT_TOL = 1e-12


@dataclass(frozen=True)
class Criterion:
    """A summability or growth condition on N_m.

    kinds: ``carleson`` (eps), ``union_m`` (M), ``gamma_carleson`` (gamma),
    ``cochran``, ``dirichlet_finite`` (a), ``ball_carleson`` (eps).
    """

    kind: str
    param: float | None = None

    KINDS = ("carleson", "union_m", "gamma_carleson", "cochran", "dirichlet_finite", "ball_carleson")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise InvalidInputError(f"unknown criterion {self.kind!r}")
        if self.kind != "cochran" and self.param is None:
            raise InvalidInputError(f"criterion {self.kind} needs a parameter")

    @property
    def growth_bound(self) -> bool:
        """True for sup-type conditions (N_m <= C 2^(...)) rather than series."""
        return self.kind in ("carleson", "ball_carleson")

    @classmethod
    def carleson(cls, eps):
        return cls("carleson", eps)

    @classmethod
    def union_m(cls, M):
        return cls("union_m", M)

    @classmethod
    def gamma_carleson(cls, gamma):
        return cls("gamma_carleson", gamma)

    @classmethod
    def cochran(cls):
        return cls("cochran")

    @classmethod
    def dirichlet_finite(cls, a):
        return cls("dirichlet_finite", a)

    @classmethod
    def ball_carleson(cls, eps):
        return cls("ball_carleson", eps)


@dataclass(frozen=True)
class SeriesReport:
    classification: str
    partial_sums: list
    exponent: float | None
    criterion: Criterion

    @property
    def converges(self) -> bool:
        return self.classification == CONVERGES


def _log2_term(c: Criterion, log2_n: float, degree: int, d: int) -> float:
    p = c.param
    if c.kind == "union_m":
        return (1 + p) * log2_n - p * degree
    if c.kind == "gamma_carleson":
        return log2_n - p * degree
    if c.kind == "cochran":
        return 2 * log2_n - degree
    if c.kind == "dirichlet_finite":
        return log2_n - (1 - p) * degree
    if c.kind == "carleson":
        return log2_n - (1 - p) * degree
    return log2_n - d * (1 - p) * degree


def _exponent(c: Criterion, beta: float, d: int) -> float:
    return _log2_term(c, beta, 1, d) - _log2_term(c, 0.0, 0, d)


def series_criterion(profile: CountingProfile, criterion: Criterion) -> SeriesReport:
    """Classify an exponential profile against a criterion and report partial sums.

    For series criteria ``partial_sums[s]`` is the sum of all terms with
    |m| <= s, multi-index degeneracy included.  For the growth bounds
    (``carleson``, ``ball_carleson``) it is the running sup of
    N_m 2^-(exponent |m|).
    """
    if criterion.kind == "ball_carleson" and not profile.shells:
        raise InvalidInputError("ball_carleson applies to ball (shell) profiles")
    if criterion.kind != "ball_carleson" and profile.shells:
        raise InvalidInputError(f"{criterion.kind} applies to polydisc profiles")

    by_degree: dict = {}
    for m, n in profile.counts():
        deg = sum(m)
        by_degree.setdefault(deg, []).append(n)
    partial = []
    acc = 0.0
    for s in range(profile.truncation_degree + 1):
        terms = [2.0 ** _log2_term(criterion, math.log2(n), s, profile.d) for n in by_degree.get(s, [])]
        if criterion.growth_bound:
            acc = max([acc] + terms)
        else:
            acc += sum(terms)
        partial.append(acc)

    if profile.table is not None:
        return SeriesReport(INDETERMINATE, partial, None, criterion)
    # ceil(C 2^(beta s)) >= 1, so a negative beta behaves like beta = 0
    beta = max(profile.beta, 0.0)
    e = _exponent(criterion, beta, profile.d)
    if criterion.growth_bound:
        cls = CONVERGES if e <= _EXPONENT_TOL else DIVERGES
    else:
        cls = CONVERGES if e < -_EXPONENT_TOL else DIVERGES
    return SeriesReport(cls, partial, e, criterion)
