import math

import numpy as np
import pytest
from scipy.integrate import quad

from randcarleson.errors import InvalidInputError, ResourceLimitError
from randcarleson.gramian import (BlockScheme, ChernoffParams, GramMatrix, SzegoDiscOperator, TruncatedFrame,
                                  ball_schur_factor_check, block_gram_norms, build_gram, chernoff_bound,
                                  dirichlet_regime_form, expected_frame_diagonal, expected_sq_entry_dirichlet,
                                  expected_sq_entry_szego, frame_norm_samples, gram_norm, gram_operator,
                                  hs_norm_offdiagonal, mc_expected_sq_entry, operator_norm,
                                  partial_sum_tail_bound, tail_dimension_factor, truncated_frame)
from randcarleson.kernels import Domain, KernelSpec
from randcarleson.sequences import (MIDPOINT, UNIFORM_IN_BAND, CountingProfile, RandomSequence, sample)

DISC = Domain.polydisc(1)


def disc_seq(*z):
    return RandomSequence.from_points(np.array(z, dtype=complex).reshape(-1, 1), DISC)


# -- build_gram ------------------------------------------------------------------

def test_build_gram_examples():
    assert build_gram(KernelSpec.szego(1), disc_seq(0.3)).entries.tolist() == [[1.0]]
    G = build_gram(KernelSpec.szego(1), disc_seq(0, 0.5)).entries
    assert G[0, 1] == pytest.approx(math.sqrt(0.75), abs=1e-15)
    ball = RandomSequence.from_points(np.array([[0, 0], [0.5, 0]]), Domain.ball(2))
    assert build_gram(KernelSpec.besov_sobolev(0, 2), ball).entries[0, 1] == pytest.approx(0.75, abs=1e-15)


def test_gram_invariants():
    seq = sample(CountingProfile.exponential(1, 0.8, 2, 6), UNIFORM_IN_BAND, seed=1)
    G = build_gram(KernelSpec.szego(2), seq).entries
    assert np.max(np.abs(np.diag(G) - 1)) < 1e-12
    assert np.max(np.abs(G - G.conj().T)) < 1e-12
    assert np.linalg.eigvalsh(G)[0] >= -1e-8


def test_build_gram_cap():
    seq = sample(CountingProfile.exponential(1, 1, 1, 7), seed=0)
    with pytest.raises(ResourceLimitError):
        build_gram(KernelSpec.szego(1), seq, cap=100)


def test_binary_round_trip_is_exact():
    seq = sample(CountingProfile.exponential(1, 0.7, 2, 5), UNIFORM_IN_BAND, seed=2)
    G = build_gram(KernelSpec.dirichlet(0.4, 2), seq)
    back = GramMatrix.from_bytes(G.to_bytes())
    assert back.entries.tobytes() == G.entries.tobytes()
    assert back.spec == G.spec and np.array_equal(back.regions, G.regions)
    assert G.to_bytes()[:4] == b"RCGM"


# -- norms ---------------------------------------------------------------------------

@pytest.mark.parametrize("method", ["power", "lanczos"])
def test_operator_norm_examples(method):
    assert operator_norm(np.eye(5), method=method).value == pytest.approx(1.0)
    assert operator_norm(np.ones((7, 7)), method=method).value == pytest.approx(7.0)
    est = operator_norm(np.array([[1, 0.5], [0.5, 1]]), method=method)
    assert est.value == pytest.approx(1.5) and est.converged


def test_operator_norm_rejects_non_hermitian():
    with pytest.raises(InvalidInputError):
        operator_norm(np.array([[1.0, 0.2], [0.0, 1.0]]))


def test_operator_norm_flags_unconverged():
    M = np.diag([1.0, 0.999999, 0.5])
    est = operator_norm(M, max_iter=3)
    assert not est.converged and est.iterations == 3


def test_power_lanczos_and_dense_agree():
    seq = sample(CountingProfile.exponential(1, 0.9, 1, 8), seed=3)
    G = build_gram(KernelSpec.szego(1), seq).entries
    exact = np.linalg.eigvalsh(G)[-1]
    p = operator_norm(G, tol=1e-12, max_iter=100_000)
    assert p.converged and p.value == pytest.approx(exact, rel=1e-8)
    assert operator_norm(G, method="lanczos").value == pytest.approx(exact, rel=1e-10)
    assert p.value >= 1 - 1e-8


def test_norm_monotone_under_adding_points():
    seq = sample(CountingProfile.exponential(1, 0.9, 2, 5), UNIFORM_IN_BAND, seed=4)
    G = build_gram(KernelSpec.szego(2), seq).entries
    prev = 0.0
    for k in range(1, len(seq) + 1, 7):
        cur = np.linalg.eigvalsh(G[:k, :k])[-1]
        assert cur >= prev - 1e-12
        prev = cur


def test_nufft_operator_matches_dense():
    seq = sample(CountingProfile.exponential(1, 0.8, 1, 11), MIDPOINT, seed=5)
    G = build_gram(KernelSpec.szego(1), seq).entries
    op = SzegoDiscOperator(seq)
    x = np.random.default_rng(0).standard_normal(len(seq)) + 1j
    y = G @ x
    assert np.max(np.abs(op.matvec(x) - y)) < 1e-9 * np.abs(y).max()
    assert gram_norm(KernelSpec.szego(1), seq, dense_cap=0, fast_threshold=0).value == pytest.approx(
        np.linalg.eigvalsh(G)[-1], rel=1e-8)


def test_nufft_operator_requires_midpoints():
    seq = sample(CountingProfile.exponential(1, 0.8, 1, 6), UNIFORM_IN_BAND, seed=5)
    with pytest.raises(InvalidInputError):
        SzegoDiscOperator(seq)
    assert isinstance(gram_operator(KernelSpec.szego(1), seq), np.ndarray)


# -- block schemes ---------------------------------------------------------------------

@pytest.mark.parametrize("eps", [0.5, 0.3, 0.25, 0.1])
def test_block_scheme_structure(eps):
    s = BlockScheme(eps, 60)
    assert s.blocks[0][0] == 0
    assert all(a[1] >= b[0] for a, b in zip(s.blocks, s.blocks[1:]))
    for deg in range(61):
        assert s.blocks_containing(deg)
    # a degree meets at most floor(M_eps) + 1 blocks (ceil(M_eps) unless eps is dyadic)
    assert s.max_degree_multiplicity() <= math.floor(s.overlap_bound) + 1
    if not math.log2(1 / eps).is_integer():
        assert s.max_degree_multiplicity() <= math.ceil(s.overlap_bound)


def test_hs_offdiagonal_examples():
    scheme = BlockScheme(0.5, 20)        # blocks [0,2], [1,4], [2,8], [4,16], ...
    one_block = disc_seq(0.0, 0.6, 0.1j)
    assert hs_norm_offdiagonal(build_gram(KernelSpec.szego(1), one_block), scheme) == 0.0
    G = GramMatrix(np.eye(3, dtype=complex), KernelSpec.szego(1), np.array([[0], [5], [12]]))
    assert hs_norm_offdiagonal(G, scheme) == 0.0
    # degrees 0 and 9 share no block
    pair = disc_seq(0.0, 1 - 3 * 2.0 ** -11)
    Gp = build_gram(KernelSpec.szego(1), pair)
    assert hs_norm_offdiagonal(Gp, scheme) == pytest.approx(math.sqrt(2) * abs(Gp.entries[0, 1]))
    with pytest.raises(InvalidInputError):
        hs_norm_offdiagonal(GramMatrix(np.eye(2), KernelSpec.szego(1)), scheme)


def test_block_gram_norm_examples():
    seq = sample(CountingProfile.exponential(1, 0.7, 1, 9), seed=6)
    G = build_gram(KernelSpec.szego(1), seq)
    full = np.linalg.eigvalsh(G.entries)[-1]
    wide = BlockScheme(0.01, 9)
    assert block_gram_norms(G, wide).blocks[0][3] == pytest.approx(full)
    rep = block_gram_norms(G, BlockScheme(0.5, 9))
    assert all(row[3] <= full + 1e-12 for row in rep.blocks)
    assert full <= rep.lemma_bound + 1e-12
    diag = GramMatrix(np.eye(4, dtype=complex), KernelSpec.szego(1), np.array([[0], [1], [3], [6]]))
    assert all(row[3] == pytest.approx(1.0) for row in block_gram_norms(diag, BlockScheme(0.5, 6)).blocks
               if row[2])


def test_block_diagonal_spectrum():
    A = np.array([[1, 0.5], [0.5, 1]])
    B = np.array([[1, 1.0], [1.0, 1]])
    G = np.zeros((4, 4))
    G[:2, :2], G[2:, 2:] = A, B
    regions = np.array([[0], [0], [20], [20]])
    gm = GramMatrix(G.astype(complex), KernelSpec.szego(1), regions)
    rep = block_gram_norms(gm, BlockScheme(0.5, 20))
    assert np.linalg.eigvalsh(G)[-1] == pytest.approx(2.0)
    assert rep.sup_norm == pytest.approx(2.0)
    assert 2.0 <= rep.combination


# -- expected entries -------------------------------------------------------------------

def test_szego_expected_entry_examples():
    assert expected_sq_entry_szego(0, 0).value == 1.0
    half = expected_sq_entry_szego(0.5, 0.5)
    assert half.displayed == pytest.approx(0.75)
    assert half.value == pytest.approx(0.75 ** 2 / (1 - 0.5 ** 4))
    assert expected_sq_entry_szego(0.9, 0.9).displayed == pytest.approx(0.19)
    assert expected_sq_entry_szego(0.9, 0.9).value == pytest.approx(0.19 / 1.81)
    with pytest.raises(InvalidInputError):
        expected_sq_entry_szego(1.0, 0.5)


def test_szego_expected_entry_by_quadrature():
    # independent oracle: average |s_w(z)|^2 / (||s_z||^2 ||s_w||^2) over the relative angle
    for r, s in [(0.3, 0.7), (0.9, 0.5), (0.99, 0.95)]:
        f = lambda t: (1 - r * r) * (1 - s * s) / abs(1 - r * s * np.exp(1j * t)) ** 2
        val = quad(f, 0, 2 * np.pi, limit=500, epsabs=1e-14)[0] / (2 * np.pi)
        assert expected_sq_entry_szego(r, s).value == pytest.approx(val, rel=1e-10)


def test_szego_expected_entry_monte_carlo():
    rng = np.random.default_rng(7)
    for d in (1, 2):
        for _ in range(3):
            r, s = rng.random(d), rng.random(d)
            mean, se = mc_expected_sq_entry(KernelSpec.szego(d), r, s, 100_000, seed=int(rng.integers(1 << 30)))
            assert abs(mean - expected_sq_entry_szego(r, s).value) < 3 * se


def test_dyadic_surrogate_is_comparable():
    for m, k in [(0, 0), (3, 5), (7, 2), (10, 10)]:
        r, s = 1 - 3 * 2.0 ** -(m + 2), 1 - 3 * 2.0 ** -(k + 2)
        e = expected_sq_entry_szego(r, s)
        assert e.dyadic == pytest.approx(1 / (2 ** m + 2 ** k))
        assert 0.1 < e.value / e.dyadic < 10


def test_dirichlet_zero_reduces_to_szego():
    rng = np.random.default_rng(8)
    for _ in range(20):
        d = int(rng.integers(1, 3))
        r, s = rng.random(d) * 0.99, rng.random(d) * 0.99
        assert abs(expected_sq_entry_dirichlet(0.0, r, s) - expected_sq_entry_szego(r, s).value) < 1e-10


def test_dirichlet_origin_value():
    for a in (0.0, 0.3, 0.8):
        assert expected_sq_entry_dirichlet(a, 0.0, 0.6) == pytest.approx((1 - 0.36) ** (1 - a), rel=1e-12)
    assert expected_sq_entry_dirichlet(0.0, 0.0, 0.6) == pytest.approx(1 - 0.36)


def test_dirichlet_log_kernel_brute_force():
    r = 0.5
    l = np.arange(1_000_000)
    series = np.sum((1.0 / (l + 1)) ** 2 * (r * r) ** (2 * l))
    norm = -math.log1p(-r * r) / (r * r)
    assert expected_sq_entry_dirichlet(1.0, r, r) == pytest.approx(series / norm ** 2, rel=1e-12)


def test_dirichlet_by_quadrature():
    spec = KernelSpec.dirichlet(0.6, 1)
    r, s = 0.8, 0.7
    f = lambda t: abs(complex(np.asarray(
        __import__("randcarleson.kernels", fromlist=["normalized_pairs"]).normalized_pairs(
            spec, np.array([[r * np.exp(1j * t)]]), np.array([[s]])))[0])) ** 2
    val = quad(f, 0, 2 * np.pi, limit=200)[0] / (2 * np.pi)
    assert expected_sq_entry_dirichlet(0.6, r, s) == pytest.approx(val, rel=1e-9)


def test_dirichlet_iteration_cap():
    from randcarleson.errors import NumericError
    with pytest.raises(NumericError) as info:
        expected_sq_entry_dirichlet(0.5, 0.9999, 0.9999, max_terms=100)
    assert info.value.partial > 0


def test_dirichlet_regime_form_bounded_above_half():
    vals = [expected_sq_entry_dirichlet(0.75, r, r) / dirichlet_regime_form(0.75, r, r)
            for r in (0.9, 0.99, 0.999)]
    assert max(vals) / min(vals) < 3


# -- frames ------------------------------------------------------------------------------

def test_frame_single_point_examples():
    assert truncated_frame(disc_seq(0.0), (0, 10), 4).norm == pytest.approx(1.0)
    for r in (0.3, 0.75):
        for L in (0, 3, 9):
            T = truncated_frame(disc_seq(r), (0, 30), L)
            assert T.size == L + 1
            assert T.norm == pytest.approx(1 - r ** (2 * (L + 1)), abs=1e-14)


def test_frame_and_gram_norms_agree_for_large_L():
    seq = sample(CountingProfile.exponential(1, 0.6, 1, 4), UNIFORM_IN_BAND, seed=9)
    g = np.linalg.eigvalsh(build_gram(KernelSpec.szego(1), seq).entries)[-1]
    b = int(seq.degrees.max()) + 1
    for L in (10, 40, 200):
        T = truncated_frame(seq, (0, 10), L)
        gap = g - T.norm
        assert -1e-10 <= gap <= partial_sum_tail_bound(len(seq), b, L) + 1e-12


def test_frame_cap_and_domain():
    seq = sample(CountingProfile.exponential(1, 0.6, 3, 2), seed=9)
    with pytest.raises(ResourceLimitError):
        truncated_frame(seq, (0, 2), 20)
    ball = sample(CountingProfile.exponential(1, 0.6, 2, 2, shells=True), seed=9)
    with pytest.raises(InvalidInputError):
        truncated_frame(ball, (0, 2), 2)


def test_expected_frame_diagonal_examples():
    np.testing.assert_allclose(expected_frame_diagonal(np.array([[0.0]]), 3), [1, 0, 0, 0])
    assert expected_frame_diagonal(np.array([[0.5]]), 2)[1] == pytest.approx(0.1875)
    K, m = 12, 3
    r = 1 - 3 * 2.0 ** -(m + 2)
    mu = expected_frame_diagonal(np.full((K, 1), r), 5).max()
    assert mu == pytest.approx(K * (1 - r * r))
    assert 1 < mu / (K * 2.0 ** -m) < 2


def test_expected_frame_by_monte_carlo():
    rng = np.random.default_rng(10)
    radii = np.array([[0.5, 0.3], [0.7, 0.2], [0.1, 0.8]])
    L, trials = 2, 20_000
    acc = np.zeros(((L + 1) ** 2, (L + 1) ** 2), dtype=complex)
    sq = np.zeros_like(acc, dtype=float)
    for _ in range(trials):
        pts = radii * np.exp(2j * np.pi * rng.random(radii.shape))
        T = truncated_frame(RandomSequence.from_points(pts, Domain.polydisc(2)), (0, 100), L).matrix
        acc += T
        sq += np.abs(T) ** 2
    mean = acc / trials
    se = np.sqrt(np.maximum(sq / trials - np.abs(mean) ** 2, 0) / trials) + 1e-15
    diag = expected_frame_diagonal(radii, L)
    assert np.all(np.abs(np.diag(mean).real - diag) <= 3 * np.diag(se) + 1e-12)
    off = ~np.eye(len(diag), dtype=bool)
    # a 3-SE envelope on many entries: allow the expected handful of excursions
    assert np.mean(np.abs(mean[off]) <= 3 * se[off] + 1e-12) > 0.95


def test_tail_bound_examples():
    assert partial_sum_tail_bound(1, 1, 1) == pytest.approx(0.25)
    vals = [partial_sum_tail_bound(5, 3, L) for L in range(1, 30)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert 1 <= tail_dimension_factor(3, 2, 5) <= 3


def test_frame_norm_samples_match_direct_frames():
    norms = frame_norm_samples(0.5, 7, 3, 5, seed=1)
    assert norms.shape == (5,) and np.all(norms > 0)
    assert np.all(norms <= 7 * (1 - 0.25) * 1 / (1 - 0.25) + 1e-12)


# -- Chernoff ---------------------------------------------------------------------------

def test_chernoff_examples():
    assert chernoff_bound(ChernoffParams(0.0, 5.0, 4)) == pytest.approx(4)
    assert chernoff_bound(ChernoffParams(3.0, 0.0, 4)) == pytest.approx(4)
    assert chernoff_bound(ChernoffParams(math.e - 1, 10.0, 9)) == pytest.approx(9)
    assert chernoff_bound(ChernoffParams(4.0, 1e6, 9)) == 0.0
    with pytest.raises(InvalidInputError):
        ChernoffParams(-1.0, 1.0, 1)


# -- Schur --------------------------------------------------------------------------------

def test_schur_norm_lemma_random():
    rng = np.random.default_rng(11)
    for _ in range(30):
        n = int(rng.integers(2, 40))
        X = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        A = X @ X.conj().T
        Y = rng.standard_normal((n, 3)) + 1j * rng.standard_normal((n, 3))
        H = Y @ Y.conj().T
        dinv = 1 / np.sqrt(np.diag(H).real)
        H = dinv[:, None] * H * dinv[None, :]
        assert np.linalg.eigvalsh(A * H)[-1] <= np.linalg.eigvalsh(A)[-1] + 1e-10
        assert np.linalg.eigvalsh(A * np.ones((n, n)))[-1] == pytest.approx(np.linalg.eigvalsh(A)[-1])


def test_ball_schur_check():
    seq = sample(CountingProfile.exponential(1, 1.0, 2, 3, shells=True), UNIFORM_IN_BAND, seed=12)
    rep = ball_schur_factor_check(seq, 1.0)
    assert rep.passed and rep.entry_error < 1e-10 and rep.min_eig_h > -1e-10
    two = RandomSequence.from_points(np.array([[0.3, 0.1j], [-0.2, 0.5]]), Domain.ball(2))
    assert ball_schur_factor_check(two, 0.7).entry_error < 1e-15
    with pytest.raises(InvalidInputError):
        ball_schur_factor_check(seq, 2.0)
