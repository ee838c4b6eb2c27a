"""Separation constants, greedy partitions, rectangle collisions and clusters.

Pairwise scans are exact.  Where a scan only needs pairs within a distance
threshold, candidates are restricted with the bound rho(z, w) >= rho(|z|, |w|)
(applied to the first coordinate on the polydisc), which never drops a pair.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import InvalidInputError
from .kernels import POLYDISC, pseudo_hyperbolic_matrix, rho_s_matrix
from .sequences import DyadicIndex, RandomSequence

RHO = "rho"
RHO_S = "rho_s"
_CHUNK = 512
_WINDOW_PAD = 1e-12


def _distances(seq: RandomSequence, rows: np.ndarray, cols: np.ndarray, metric: str) -> np.ndarray:
    Z, W = seq.points[rows], seq.points[cols]
    if metric == RHO:
        return pseudo_hyperbolic_matrix(Z, W, seq.domain)
    if metric == RHO_S:
        if seq.domain.kind != POLYDISC:
            raise InvalidInputError("rho_s is defined on the polydisc")
        return rho_s_matrix(Z, W, seq.d)
    raise InvalidInputError(f"unknown metric {metric!r}")


def separation_constant(seq: RandomSequence, metric: str = RHO) -> float:
    """min_{n != j} dist(z_n, z_j); 1 by convention for fewer than two points."""
    n = len(seq)
    if n < 2:
        return 1.0
    best = 1.0
    idx = np.arange(n)
    for lo in range(0, n - 1, _CHUNK):
        rows = idx[lo:lo + _CHUNK]
        cols = idx[lo:]
        D = _distances(seq, rows, cols, metric)
        # keep only j > i within the block
        mask = cols[None, :] > rows[:, None]
        if mask.any():
            best = min(best, float(D[mask].min()))
    return best


def _radial_keys(seq: RandomSequence) -> np.ndarray:
    if seq.domain.kind == POLYDISC:
        return np.abs(seq.points[:, 0])
    return np.sqrt(np.sum(np.abs(seq.points) ** 2, axis=1))


def _neighbour_lists(seq: RandomSequence, delta: float, metric: str, strict: bool) -> list[np.ndarray]:
    """For each point, indices of other points at distance < delta (or <= delta)."""
    n = len(seq)
    s = _radial_keys(seq)
    order = np.argsort(s, kind="stable")
    sorted_s = s[order]
    # rho_s equals rho in one variable and dominates it elsewhere on the
    # polydisc, so the same radial window is valid for both metrics
    lo_r = np.clip((s - delta) / (1 - s * delta), 0, None) - _WINDOW_PAD
    hi_r = (s + delta) / (1 + s * delta) + _WINDOW_PAD
    out: list = [None] * n
    for start in range(0, n, _CHUNK):
        block = order[start:start + _CHUNK]
        a = np.searchsorted(sorted_s, lo_r[block].min(), side="left")
        b = np.searchsorted(sorted_s, hi_r[block].max(), side="right")
        cand = order[a:b]
        D = _distances(seq, block, cand, metric)
        close = D < delta if strict else D <= delta
        for row, i in enumerate(block):
            nb = cand[close[row]]
            out[i] = np.sort(nb[nb != i])
    return out


@dataclass(frozen=True)
class PartitionResult:
    M: int
    assignment: np.ndarray
    threshold: float
    max_degree: int

    def parts(self) -> list[np.ndarray]:
        return [np.nonzero(self.assignment == k)[0] for k in range(self.M)]

    def to_jsonl(self) -> str:
        lines = [json.dumps({"part": k, "threshold": self.threshold, "members": p.tolist()})
                 for k, p in enumerate(self.parts())]
        return "\n".join(lines) + ("\n" if lines else "")


def greedy_partition(seq: RandomSequence, delta: float, metric: str = RHO) -> PartitionResult:
    """Greedy colouring, in generation order, of the graph with edges at distance < delta."""
    if not 0 < delta < 1:
        raise InvalidInputError("delta must lie in (0, 1)")
    n = len(seq)
    nbrs = _neighbour_lists(seq, delta, metric, strict=True)
    colour = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        used = set(colour[nbrs[i]][colour[nbrs[i]] >= 0].tolist())
        c = 0
        while c in used:
            c += 1
        colour[i] = c
    max_deg = max((len(v) for v in nbrs), default=0)
    return PartitionResult(int(colour.max(initial=-1)) + 1, colour, float(delta), max_deg)


@dataclass(frozen=True)
class CollisionEvent:
    region: DyadicIndex
    rectangle: tuple
    members: tuple
    shifted: bool

    def to_dict(self) -> dict:
        out = asdict(self)
        out["region"] = list(self.region.m)
        out["rectangle"] = list(self.rectangle)
        out["members"] = list(self.members)
        return out


def _rectangles(angles: np.ndarray, regions: np.ndarray, shifted: bool) -> np.ndarray:
    width = np.ldexp(1.0, -regions)
    t = angles + (width / 2 if shifted else 0.0)
    t = t - np.floor(t)
    j = np.floor(t / width).astype(np.int64)
    # guard the half-open right edge against rounding
    return np.minimum(j, np.left_shift(1, regions) - 1)


def rectangle_collisions(seq: RandomSequence, M: int) -> list[CollisionEvent]:
    """Groups of at least M+1 points sharing a region and a dyadic rectangle.

    Rectangles in region m have side lengths 2^-m_i (in turns) and are
    half-open; the shifted grid moves them by half a side.  A shifted event
    whose members already form part of an unshifted event is not repeated.
    """
    if seq.domain.kind != POLYDISC:
        raise InvalidInputError("rectangle collisions need a polydisc sequence")
    if M < 1:
        raise InvalidInputError("M must be at least 1")
    if len(seq) == 0:
        return []
    angles, regions = seq.angles, seq.regions
    d = seq.d
    events: list[CollisionEvent] = []
    plain_sets: list[frozenset] = []
    for shifted in (False, True):
        keys = np.concatenate([regions, _rectangles(angles, regions, shifted)], axis=1)
        uniq, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.reshape(-1)
        for g in np.nonzero(counts >= M + 1)[0]:
            members = tuple(int(i) for i in np.nonzero(inverse == g)[0])
            if shifted and any(set(members) <= s for s in plain_sets):
                continue
            if not shifted:
                plain_sets.append(frozenset(members))
            events.append(CollisionEvent(DyadicIndex(tuple(int(v) for v in uniq[g, :d])),
                                         tuple(int(v) for v in uniq[g, d:]), members, shifted))
    return events


def collisions_to_jsonl(events: list[CollisionEvent]) -> str:
    return "".join(json.dumps(e.to_dict(), sort_keys=True) + "\n" for e in events)


def collisions_from_jsonl(text: str) -> list[CollisionEvent]:
    out = []
    for line in text.splitlines():
        if line.strip():
            row = json.loads(line)
            out.append(CollisionEvent(DyadicIndex(tuple(row["region"])), tuple(row["rectangle"]),
                                      tuple(row["members"]), row["shifted"]))
    return out


def noncolliding_min_distance(seq: RandomSequence) -> float:
    """Smallest rho between same-region points that share no rectangle in either grid.

    Report-only: an empirical stand-in for the uniform distance of
    non-colliding points.  Returns 1 when there is no such pair.
    """
    best = 1.0
    angles, regions = seq.angles, seq.regions
    r0 = _rectangles(angles, regions, False)
    r1 = _rectangles(angles, regions, True)
    _, groups = np.unique(regions, axis=0, return_inverse=True)
    groups = groups.reshape(-1)
    for g in np.unique(groups):
        idx = np.nonzero(groups == g)[0]
        if len(idx) < 2:
            continue
        share = (np.all(r0[idx][:, None] == r0[idx][None], axis=2)
                 | np.all(r1[idx][:, None] == r1[idx][None], axis=2))
        np.fill_diagonal(share, True)
        if (~share).any():
            D = pseudo_hyperbolic_matrix(seq.points[idx], seq.points[idx], seq.domain)
            best = min(best, float(D[~share].min()))
    return best


def cluster_count(seq: RandomSequence, M: int, l: int) -> int:
    """Number of regions holding a point whose closed rho-ball of radius 2^-l has >= M other points."""
    if l < 0:
        raise InvalidInputError("l must be nonnegative")
    if len(seq) == 0:
        return 0
    nbrs = _neighbour_lists(seq, 2.0 ** -l, RHO, strict=False)
    hit = np.array([len(v) >= M for v in nbrs])
    if not hit.any():
        return 0
    return len(np.unique(seq.regions[hit], axis=0))


def uniform_separation_product(seq: RandomSequence, n: int) -> float:
    """prod_{j != n} rho(z_j, z_n), accumulated in log space; 0 on a duplicate point."""
    if not 0 <= n < len(seq):
        raise InvalidInputError(f"index {n} out of range")
    D = pseudo_hyperbolic_matrix(seq.points[[n]], seq.points, seq.domain)[0]
    D = np.delete(D, n)
    if np.any(D == 0.0):
        return 0.0
    return float(np.exp(np.sum(np.log(D))))


def min_uniform_separation_product(seq: RandomSequence) -> tuple[float, int]:
    """(inf_n prod_{j != n} rho(z_j, z_n), minimising n)."""
    if len(seq) == 0:
        raise InvalidInputError("empty sequence")
    vals = [uniform_separation_product(seq, i) for i in range(len(seq))]
    k = int(np.argmin(vals))
    return vals[k], k
