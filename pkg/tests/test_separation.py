import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from randcarleson.errors import InvalidInputError
from randcarleson.kernels import Domain, pseudo_hyperbolic_matrix, rho_s_matrix
from randcarleson.separation import (RHO, RHO_S, cluster_count, collisions_from_jsonl, collisions_to_jsonl,
                                     greedy_partition, min_uniform_separation_product,
                                     noncolliding_min_distance, rectangle_collisions, separation_constant,
                                     uniform_separation_product)
from randcarleson.sequences import UNIFORM_IN_BAND, CountingProfile, RandomSequence, sample

DISC = Domain.polydisc(1)


def disc_seq(*z):
    return RandomSequence.from_points(np.array(z, dtype=complex).reshape(-1, 1), DISC)


def turns(r, *t):
    return disc_seq(*[r * np.exp(2j * np.pi * x) for x in t])


def brute_min(seq, metric=RHO):
    if metric == RHO:
        D = pseudo_hyperbolic_matrix(seq.points, seq.points, seq.domain)
    else:
        D = rho_s_matrix(seq.points, seq.points, seq.d)
    np.fill_diagonal(D, np.inf)
    return D.min()


# -- separation constant ----------------------------------------------------------

def test_separation_examples():
    assert separation_constant(disc_seq(0.3, 0.3)) == 0.0
    assert separation_constant(disc_seq(0, 0.5)) == pytest.approx(0.5)
    poly = RandomSequence.from_points(np.array([[0.5, 0], [0, 0.5], [0, 0]]), Domain.polydisc(2))
    assert separation_constant(poly) == pytest.approx(0.5)
    assert separation_constant(disc_seq(0.2)) == 1.0


@pytest.mark.parametrize("metric", [RHO, RHO_S])
def test_separation_matches_brute_force(metric):
    seq = sample(CountingProfile.exponential(1, 0.8, 2, 7), UNIFORM_IN_BAND, seed=1)
    assert separation_constant(seq, metric) == pytest.approx(brute_min(seq, metric), abs=1e-14)


# -- greedy partition -----------------------------------------------------------------

def test_partition_examples():
    assert greedy_partition(turns(0.5, 0, 0.5), 0.5).M == 1
    assert greedy_partition(disc_seq(0.4, 0.4, 0.4, 0.4), 0.5).M == 4
    assert greedy_partition(disc_seq(0.5, 0.51, 0.52), 0.5).M == 3
    with pytest.raises(InvalidInputError):
        greedy_partition(disc_seq(0.1), 1.0)


@pytest.mark.parametrize("delta", [0.3, 0.6, 0.9])
def test_partition_soundness_and_greedy_bound(delta):
    seq = sample(CountingProfile.exponential(1, 0.8, 1, 9), UNIFORM_IN_BAND, seed=2)
    part = greedy_partition(seq, delta)
    D = pseudo_hyperbolic_matrix(seq.points, seq.points, seq.domain)
    for p in part.parts():
        sub = D[np.ix_(p, p)]
        np.fill_diagonal(sub, np.inf)
        assert sub.min() >= delta
    adj = (D < delta) & ~np.eye(len(seq), dtype=bool)
    assert part.max_degree == adj.sum(axis=1).max()
    assert part.M <= 1 + part.max_degree
    assert sum(len(p) for p in part.parts()) == len(seq)
    assert len(part.to_jsonl().splitlines()) == part.M


# -- collisions --------------------------------------------------------------------

def test_collision_examples():
    assert rectangle_collisions(disc_seq(0.1, 0.6, 0.8), 1) == []
    ev = rectangle_collisions(turns(0.6, 0.10, 0.12), 1)
    assert len(ev) == 1 and not ev[0].shifted and ev[0].members == (0, 1)
    assert ev[0].region.m == (1,) and ev[0].rectangle == (0,)
    ev = rectangle_collisions(turns(0.6, 0.49, 0.51), 1)
    assert len(ev) == 1 and ev[0].shifted and ev[0].members == (0, 1)


def test_collision_threshold_and_maximality():
    seq = turns(0.6, 0.05, 0.1, 0.2)
    assert rectangle_collisions(seq, 3) == []
    ev = rectangle_collisions(seq, 2)
    assert [e.members for e in ev] == [(0, 1, 2)]


def test_collisions_agree_with_brute_force():
    seq = sample(CountingProfile.exponential(1, 0.9, 2, 5), UNIFORM_IN_BAND, seed=3)
    events = rectangle_collisions(seq, 1)
    t, m = seq.angles, seq.regions
    found = set()
    for shift in (0.0, 0.5):
        groups = {}
        for i in range(len(seq)):
            w = 2.0 ** -m[i]
            key = (tuple(m[i]), tuple(np.floor(((t[i] + shift * w) % 1.0) / w).astype(int)))
            groups.setdefault(key, []).append(i)
        found |= {tuple(v) for v in groups.values() if len(v) >= 2}
    got = {e.members for e in events}
    assert got <= found
    # every brute-force group is reported or contained in an unshifted event
    assert all(any(set(g) <= set(h) for h in got) for g in found)
    for e in events:
        assert all(tuple(seq.regions[i]) == e.region.m for i in e.members)


def test_collision_jsonl_round_trip():
    seq = sample(CountingProfile.exponential(1, 0.9, 1, 7), UNIFORM_IN_BAND, seed=4)
    events = rectangle_collisions(seq, 1)
    assert events
    assert collisions_from_jsonl(collisions_to_jsonl(events)) == events


def test_collisions_need_polydisc():
    ball = sample(CountingProfile.exponential(1, 0.5, 2, 3, shells=True), seed=1)
    with pytest.raises(InvalidInputError):
        rectangle_collisions(ball, 1)


def test_noncolliding_distance_is_positive():
    seq = sample(CountingProfile.exponential(1, 0.7, 1, 10), UNIFORM_IN_BAND, seed=5)
    assert 0 < noncolliding_min_distance(seq) <= 1


# -- clusters ------------------------------------------------------------------------

def test_cluster_examples():
    assert cluster_count(turns(0.5, 0, 0.5), 1, 2) == 0
    for l in range(6):
        assert cluster_count(disc_seq(0.4, 0.4), 1, l) >= 1
    # rho(0, 0.3) = 0.3
    pair = disc_seq(0.0, 0.3)
    assert cluster_count(pair, 1, 1) == 1
    assert cluster_count(pair, 1, 2) == 0


def test_cluster_monotonicity():
    seq = sample(CountingProfile.exponential(1, 0.8, 1, 9), UNIFORM_IN_BAND, seed=6)
    counts = [cluster_count(seq, 1, l) for l in range(8)]
    assert all(b <= a for a, b in zip(counts, counts[1:]))
    sub = seq.subset(np.arange(len(seq) // 2))
    assert all(cluster_count(sub, 1, l) <= c for l, c in enumerate(counts))


# -- uniform separation ----------------------------------------------------------------

def test_uniform_product_examples():
    assert uniform_separation_product(disc_seq(0, 0.5), 0) == pytest.approx(0.5)
    assert uniform_separation_product(disc_seq(0.2, 0.3, 0.2), 0) == 0.0
    assert uniform_separation_product(disc_seq(0, 0.5, -0.5), 0) == pytest.approx(0.25)
    val, k = min_uniform_separation_product(disc_seq(0, 0.5, -0.5))
    assert val == pytest.approx(min(uniform_separation_product(disc_seq(0, 0.5, -0.5), i) for i in range(3)))
    assert 0 <= k < 3


@settings(max_examples=50, deadline=None)
@given(st.lists(st.complex_numbers(max_magnitude=0.95), min_size=2, max_size=8))
def test_uniform_product_matches_direct(zs):
    seq = disc_seq(*zs)
    D = pseudo_hyperbolic_matrix(seq.points, seq.points, DISC)
    direct = math.prod(D[0, 1:])
    assert uniform_separation_product(seq, 0) == pytest.approx(direct, rel=1e-9, abs=1e-300)
