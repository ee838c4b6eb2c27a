"""Gram matrices of normalised kernels and the operators built around them.

Dense Gram matrices are used up to :data:`DENSE_CAP` points.  For larger
one-dimensional Szego sequences with midpoint radii, :class:`SzegoDiscOperator`
applies the Gramian matrix-free through its monomial expansion, which turns
each band into a pair of non-uniform FFTs.
"""
from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh
from scipy.special import gammaln

from .errors import InvalidInputError, NumericError, ResourceLimitError
from .kernels import BESOV_SOBOLEV, DIRICHLET, SZEGO, KernelSpec, normalized_matrix, normalized_pairs
from .sequences import MIDPOINT, RandomSequence, band_index, make_rng

DENSE_CAP = 10_000
FAST_THRESHOLD = 2048
FRAME_CAP = 4096
HERMITIAN_TOL = 1e-10


@dataclass(eq=False)
class GramMatrix:
    entries: np.ndarray
    spec: KernelSpec
    regions: np.ndarray | None = None

    @property
    def point_count(self) -> int:
        return self.entries.shape[0]

    @property
    def degrees(self) -> np.ndarray:
        if self.regions is None:
            raise InvalidInputError("Gram matrix carries no region labels")
        return self.regions.sum(axis=1)

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.entries)[0])

    def to_bytes(self) -> bytes:
        return dump_gram(self)

    @classmethod
    def from_bytes(cls, data: bytes) -> "GramMatrix":
        return load_gram(data)


def build_gram(spec: KernelSpec, seq: RandomSequence, cap: int = DENSE_CAP,
               chunk: int = 2048) -> GramMatrix:
    """Dense Gram matrix, entry (n, j) = normalized_inner(spec, lambda_n, lambda_j)."""
    n = len(seq)
    if n > cap:
        raise ResourceLimitError("dense Gram matrix size", n, cap)
    if seq.domain != spec.domain:
        raise InvalidInputError(f"kernel on {spec.domain}, sequence on {seq.domain}")
    G = np.empty((n, n), dtype=complex)
    for lo in range(0, n, chunk):
        G[lo:lo + chunk] = normalized_matrix(spec, seq.points[lo:lo + chunk], seq.points)
    # mirror the lower triangle so the matrix is Hermitian to the last bit
    iu = np.triu_indices(n, 1)
    G[iu] = G.T[iu].conj()
    np.fill_diagonal(G, 1.0)
    return GramMatrix(G, spec, seq.regions.copy())


# -- binary container --------------------------------------------------------

_MAGIC = b"RCGM"
_VERSION = 1
_FAMILY_CODES = {SZEGO: 0, DIRICHLET: 1, BESOV_SOBOLEV: 2}
_HEADER = struct.Struct("<4sHQIBdBI")


def dump_gram(G: GramMatrix) -> bytes:
    """Header, then the row-major lower triangle as little-endian (re, im) float64 pairs.

    Region labels, when present, follow as little-endian int64.
    """
    n = G.point_count
    k = 0 if G.regions is None else G.regions.shape[1]
    buf = io.BytesIO()
    buf.write(_HEADER.pack(_MAGIC, _VERSION, n, G.spec.d, _FAMILY_CODES[G.spec.family],
                           G.spec.a, int(G.regions is not None), k))
    rows, cols = np.tril_indices(n)
    tri = G.entries[rows, cols]
    buf.write(np.column_stack([tri.real, tri.imag]).astype("<f8").tobytes())
    if G.regions is not None:
        buf.write(np.ascontiguousarray(G.regions, dtype="<i8").tobytes())
    return buf.getvalue()


def load_gram(data: bytes) -> GramMatrix:
    magic, version, n, d, fam, a, has_regions, k = _HEADER.unpack_from(data, 0)
    if magic != _MAGIC or version != _VERSION:
        raise InvalidInputError("not a randcarleson Gram container")
    family = {v: key for key, v in _FAMILY_CODES.items()}[fam]
    spec = KernelSpec(family, d, a)
    off = _HEADER.size
    ntri = n * (n + 1) // 2
    pairs = np.frombuffer(data, dtype="<f8", count=2 * ntri, offset=off).reshape(-1, 2)
    off += 16 * ntri
    rows, cols = np.tril_indices(n)
    G = np.empty((n, n), dtype=complex)
    vals = pairs[:, 0] + 1j * pairs[:, 1]
    G[rows, cols] = vals
    G[cols, rows] = vals.conj()
    G[rows[rows == cols], rows[rows == cols]] = vals[rows == cols]
    regions = None
    if has_regions:
        regions = np.frombuffer(data, dtype="<i8", count=n * k, offset=off).reshape(n, k).astype(np.int64)
    return GramMatrix(G, spec, regions)


# -- norms -------------------------------------------------------------------

@dataclass(frozen=True)
class NormEstimate:
    value: float
    iterations: int
    converged: bool
    method: str

    def __float__(self):
        return self.value


def _check_hermitian(M: np.ndarray, chunk: int = 1024):
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidInputError(f"expected a square matrix, got shape {M.shape}")
    n = M.shape[0]
    for lo in range(0, n, chunk):
        block = M[lo:lo + chunk]
        if np.max(np.abs(block - M[:, lo:lo + chunk].conj().T), initial=0.0) > HERMITIAN_TOL:
            raise InvalidInputError("matrix is not Hermitian")


def _as_operator(M):
    if isinstance(M, np.ndarray):
        _check_hermitian(M)
        return M.shape[0], (lambda v: M @ v), M
    if hasattr(M, "matvec") and hasattr(M, "shape"):
        return M.shape[0], M.matvec, None
    raise InvalidInputError("operator_norm needs an ndarray or an object with matvec and shape")


def operator_norm(M, tol: float = 1e-8, max_iter: int = 10_000, seed: int = 0,
                  method: str = "power") -> NormEstimate:
    """Largest eigenvalue of a Hermitian PSD matrix or matrix-free operator.

    ``method="power"`` runs power iteration from a seeded random start and
    stops when the Rayleigh quotient moves by less than ``tol`` relatively;
    ``method="lanczos"`` uses ARPACK.  Estimates that hit ``max_iter`` come
    back with ``converged=False``.
    """
    n, matvec, dense = _as_operator(M)
    if n == 0:
        return NormEstimate(0.0, 0, True, method)
    rng = make_rng(seed)
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    v /= np.linalg.norm(v)

    if method == "lanczos":
        if n <= 3:
            dense = dense if dense is not None else np.column_stack([matvec(e) for e in np.eye(n)])
            return NormEstimate(float(np.linalg.eigvalsh(dense)[-1]), 1, True, method)
        op = LinearOperator((n, n), matvec=matvec, dtype=complex)
        try:
            w = eigsh(op, k=1, which="LA", tol=tol, maxiter=max_iter, v0=v, return_eigenvectors=False)
            return NormEstimate(float(w[0]), -1, True, method)
        except ArpackNoConvergence as exc:
            vals = exc.eigenvalues
            return NormEstimate(float(vals[0]) if len(vals) else float("nan"), max_iter, False, method)
    if method != "power":
        raise InvalidInputError(f"unknown norm method {method!r}")

    lam = None
    for it in range(1, max_iter + 1):
        w = matvec(v)
        new = float(np.real(np.vdot(v, w)))
        size = np.linalg.norm(w)
        if size == 0.0:
            return NormEstimate(0.0, it, True, method)
        if lam is not None and abs(new - lam) <= tol * abs(new):
            return NormEstimate(new, it, True, method)
        lam = new
        v = w / size
    return NormEstimate(lam, max_iter, False, method)


def spectral_norm(A) -> float:
    """Largest singular value of an arbitrary dense matrix."""
    return float(np.linalg.norm(np.asarray(A), 2))


# -- block schemes -------------------------------------------------------------

def _floor(x: float) -> int:
    return math.floor(x + 1e-9)


@dataclass(frozen=True)
class BlockScheme:
    """Overlapping degree blocks I_j = [2^(j-1), 2^j / eps] covering 0..max_degree.

    The first block is extended down to degree 0 so that the origin band is
    covered.
    """

    epsilon: float
    max_degree: int
    blocks: tuple = field(default=())

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise InvalidInputError("block scheme epsilon must lie in (0, 1)")
        if not self.blocks:
            blocks = [(0, _floor(1 / self.epsilon))]
            j = 1
            while 2 ** (j - 1) <= self.max_degree:
                blocks.append((2 ** (j - 1), _floor(2 ** j / self.epsilon)))
                j += 1
            object.__setattr__(self, "blocks", tuple(blocks))

    @property
    def overlap_bound(self) -> float:
        """M_eps = log2(1/eps) + 1."""
        return math.log2(1 / self.epsilon) + 1

    def blocks_containing(self, degree: int) -> list[int]:
        return [j for j, (lo, hi) in enumerate(self.blocks) if lo <= degree <= hi]

    def max_degree_multiplicity(self) -> int:
        return max(len(self.blocks_containing(s)) for s in range(self.max_degree + 1))

    def max_block_intersections(self) -> int:
        """sup_j #{k : I_k meets I_j}, the constant of the overlapping-blocks bound."""
        best = 0
        for lo, hi in self.blocks:
            best = max(best, sum(1 for a, b in self.blocks if a <= hi and lo <= b))
        return best

    def common_block_table(self, max_degree: int | None = None) -> np.ndarray:
        top = self.max_degree if max_degree is None else max_degree
        member = np.zeros((top + 1, len(self.blocks)), dtype=bool)
        for j, (lo, hi) in enumerate(self.blocks):
            member[lo:min(hi, top) + 1, j] = True
        return (member.astype(np.int64) @ member.T.astype(np.int64)) > 0


def hs_norm_offdiagonal(G: GramMatrix, scheme: BlockScheme) -> float:
    """Frobenius norm of the entries whose degree pair shares no block."""
    deg = G.degrees
    table = scheme.common_block_table(max(int(deg.max(initial=0)), scheme.max_degree))
    outside = ~table[np.ix_(deg, deg)]
    return float(np.sqrt(np.sum(np.abs(G.entries[outside]) ** 2)))


@dataclass(frozen=True)
class BlockReport:
    blocks: list
    sup_norm: float
    overlap_bound: float
    combination: float
    lemma_constant: int
    lemma_bound: float


def _top_eig(M: np.ndarray) -> float:
    if M.shape[0] == 0:
        return 0.0
    if M.shape[0] <= 3000:
        return float(np.linalg.eigvalsh(M)[-1])
    return operator_norm(M, method="lanczos").value


def block_gram_norms(G: GramMatrix, scheme: BlockScheme) -> BlockReport:
    """Norms of the principal sub-Gramians X_j over each degree block.

    ``combination`` is M_eps * sup_j ||X_j||; ``lemma_bound`` uses the exact
    number of mutually intersecting blocks.
    """
    deg = G.degrees
    rows = []
    for j, (lo, hi) in enumerate(scheme.blocks):
        idx = np.nonzero((deg >= lo) & (deg <= hi))[0]
        norm = _top_eig(G.entries[np.ix_(idx, idx)]) if len(idx) else 0.0
        rows.append((j, (lo, hi), len(idx), norm))
    sup = max((r[3] for r in rows), default=0.0)
    lemma = scheme.max_block_intersections()
    return BlockReport(rows, sup, scheme.overlap_bound, scheme.overlap_bound * sup, lemma, lemma * sup)


# -- expected entries ----------------------------------------------------------

def _radii(r) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(r, dtype=float))
    if np.any(arr < 0) or np.any(arr >= 1):
        raise InvalidInputError("radii must lie in [0, 1)")
    return arr


@dataclass(frozen=True)
class EntryExpectation:
    value: float          # exact E|<S_n, S_j>|^2
    displayed: float      # prod (1-r^2)(1-r'^2)/(1-r r'), comparable to value
    dyadic: float         # prod 1/(2^m_i + 2^k_i)

    def __float__(self):
        return self.value


def expected_sq_entry_szego(r_n, r_j) -> EntryExpectation:
    """Expected squared modulus of a normalised Szego Gram entry over random angles.

    For one coordinate the angle average of |1 - rho e^{i phi}|^-2 is
    1/(1 - rho^2), so the exact value is
    prod_i (1 - r_i^2)(1 - r'_i^2) / (1 - r_i^2 r'_i^2).
    """
    r = _radii(r_n)
    s = _radii(r_j)
    if r.shape != s.shape:
        raise InvalidInputError("radius vectors differ in length")
    num = (1 - r * r) * (1 - s * s)
    m = band_index(1 - r)
    k = band_index(1 - s)
    return EntryExpectation(
        value=float(np.prod(num / (1 - (r * s) ** 2))),
        displayed=float(np.prod(num / (1 - r * s))),
        dyadic=float(np.prod(1.0 / (np.ldexp(1.0, m) + np.ldexp(1.0, k)))),
    )


def dirichlet_coefficients(a: float, lo: int, hi: int) -> np.ndarray:
    """log of the Taylor coefficients c_l of the one-variable Dirichlet-type kernel, l in [lo, hi)."""
    l = np.arange(lo, hi, dtype=float)
    if a == 1.0:
        return -np.log1p(l)
    return gammaln(l + 1 - a) - gammaln(1 - a) - gammaln(l + 1)


def _dirichlet_norm_sq(a: float, r: float) -> float:
    x = r * r
    if a == 1.0:
        return 1.0 if x == 0 else -math.log1p(-x) / x
    return (1 - x) ** -(1 - a)


def _coefficient_series(a: float, x: float, tol: float, max_terms: int) -> float:
    """sum_l c_l^2 x^l with a rigorous geometric tail bound below ``tol``."""
    if x == 0.0:
        return 1.0
    logx = math.log(x)
    total = 0.0
    lo, size = 0, 1024
    while lo < max_terms:
        hi = min(lo + size, max_terms)
        terms = np.exp(2 * dirichlet_coefficients(a, lo, hi) + np.arange(lo, hi) * logx)
        total += float(np.sum(terms))
        # c_l is nonincreasing for a >= 0, so the tail is below last * x / (1 - x)
        if terms[-1] * x / (1 - x) < tol:
            return total
        lo, size = hi, size * 2
    raise NumericError(f"Dirichlet series did not reach tolerance {tol} in {max_terms} terms", partial=total)


def expected_sq_entry_dirichlet(a: float, r_n, r_j, series_tol: float = 1e-12,
                                max_terms: int = 10**8) -> float:
    """E|S^(a)(lambda_n, lambda_j)|^2 for the Dirichlet-type kernel, as an exact series.

    Per coordinate: sum_l c_l^2 (r r')^(2l) / (||k_r||^2 ||k_r'||^2).
    """
    if not 0 <= a <= 1:
        raise InvalidInputError("Dirichlet parameter must lie in [0, 1]")
    r = _radii(r_n)
    s = _radii(r_j)
    if r.shape != s.shape:
        raise InvalidInputError("radius vectors differ in length")
    out = 1.0
    for ri, si in zip(r, s):
        norm = _dirichlet_norm_sq(a, ri) * _dirichlet_norm_sq(a, si)
        out *= _coefficient_series(a, (ri * si) ** 2, series_tol * norm, max_terms) / norm
    return out


def dirichlet_regime_form(a: float, r_n, r_j) -> float:
    """prod (1-r)^(1-a) (1-r')^(1-a) F_a(r r'), with F_a = (1-x)^(2a-1), log(1/(1-x)) or 1."""
    r = _radii(r_n)
    s = _radii(r_j)
    x = r * s
    if a < 0.5:
        f = (1 - x) ** (2 * a - 1)
    elif a == 0.5:
        f = np.log(1 / (1 - x))
    else:
        f = np.ones_like(x)
    return float(np.prod((1 - r) ** (1 - a) * (1 - s) ** (1 - a) * f))


# -- truncated frame operators -----------------------------------------------

def _monomial_vectors(points: np.ndarray, L: int) -> np.ndarray:
    """Rows v_j[l] = prod_i sqrt(1-|z_i|^2) conj(z_i)^l_i over l in {0..L}^d (C order)."""
    n, d = points.shape
    powers = np.conj(points)[:, :, None] ** np.arange(L + 1)[None, None, :]
    scale = np.prod(np.sqrt(1 - np.abs(points) ** 2), axis=1)
    V = scale[:, None] * np.ones((n, 1), dtype=complex)
    for i in range(d):
        V = (V[:, :, None] * powers[:, i, None, :]).reshape(n, -1)
    return V


@dataclass(eq=False)
class TruncatedFrame:
    matrix: np.ndarray
    L: int
    window: tuple
    d: int

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def norm(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix)[-1])


def truncated_frame(seq: RandomSequence, window: tuple, L: int, cap: int = FRAME_CAP) -> TruncatedFrame:
    """Frame operator of the partial sums P_L(S_j) for points with degree in ``window``."""
    if seq.domain.kind != "polydisc":
        raise InvalidInputError("truncated frames are defined for polydisc sequences")
    size = (L + 1) ** seq.d
    if size > cap:
        raise ResourceLimitError("truncated frame dimension", size, cap)
    a, b = window
    deg = seq.degrees
    pts = seq.points[(deg >= a) & (deg <= b)]
    V = _monomial_vectors(pts, L)
    return TruncatedFrame(V.T @ V.conj(), L, (a, b), seq.d)


def expected_frame_diagonal(radii, L: int) -> np.ndarray:
    """Diagonal of E(T^L) in monomial coordinates: sum_n prod_i (1-r_i^2) r_i^(2 l_i).

    Off-diagonal expectations vanish identically because each one carries a
    factor E e^{i k theta} = 0 with k != 0.
    """
    if isinstance(radii, RandomSequence):
        radii = radii.radii
    R = np.asarray(radii, dtype=float)
    if R.ndim == 1:
        R = R[:, None]
    if np.any(R < 0) or np.any(R >= 1):
        raise InvalidInputError("radii must lie in [0, 1)")
    n, d = R.shape
    W = (1 - R * R)[:, :, None] * (R * R)[:, :, None] ** np.arange(L + 1)[None, None, :]
    acc = np.ones((n, 1))
    for i in range(d):
        acc = (acc[:, :, None] * W[:, i, None, :]).reshape(n, -1)
    return acc.sum(axis=0)


def frame_norm_samples(radius: float, n_points: int, L: int, trials: int, seed: int = 0,
                       batch: int = 500) -> np.ndarray:
    """||T^L|| for ``trials`` independent draws of n_points disc points at a fixed radius."""
    if not 0 <= radius < 1:
        raise InvalidInputError("radius must lie in [0, 1)")
    rng = make_rng(seed)
    weights = math.sqrt(1 - radius * radius) * radius ** np.arange(L + 1)
    out = np.empty(trials)
    for lo in range(0, trials, batch):
        b = min(batch, trials - lo)
        theta = 2 * np.pi * rng.random((b, n_points))
        V = weights * np.exp(-1j * theta[:, :, None] * np.arange(L + 1))
        T = np.einsum("bnk,bnl->bkl", V, V.conj())
        out[lo:lo + b] = np.linalg.eigvalsh(T)[:, -1]
    return out


def mc_expected_sq_entry(spec: KernelSpec, r_n, r_j, samples: int, seed: int = 0) -> tuple[float, float]:
    """Monte Carlo mean and standard error of |<k_n, k_j>|^2 (normalised) over uniform angles."""
    r = _radii(r_n)
    s = _radii(r_j)
    rng = make_rng(seed)
    th = 2 * np.pi * rng.random((2, samples, len(r)))
    z = r * np.exp(1j * th[0])
    w = s * np.exp(1j * th[1])
    vals = np.abs(normalized_pairs(spec, z, w)) ** 2
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(samples))


def partial_sum_tail_bound(n_points: int, b: int, L: int) -> float:
    """N_[a,b] (1 - 2^-b)^(2L): the truncation error bound without its dimensional constant."""
    return float(n_points) * (1.0 - 2.0 ** -b) ** (2 * L)


def tail_dimension_factor(d: int, b: int, L: int) -> float:
    """(1 - (1 - q)^d) / q with q = (1-2^-b)^(2L); at most d."""
    q = (1.0 - 2.0 ** -b) ** (2 * L)
    if q == 0:
        return float(d)
    return (1 - (1 - q) ** d) / q


# -- matrix Chernoff -------------------------------------------------------------

@dataclass(frozen=True)
class ChernoffParams:
    delta: float
    mu: float
    dim: int

    def __post_init__(self):
        if self.delta < 0 or self.mu < 0 or self.dim < 1:
            raise InvalidInputError("Chernoff bound needs delta >= 0, mu >= 0, dim >= 1")


def log_chernoff_bound(p: ChernoffParams) -> float:
    return math.log(p.dim) + p.delta * p.mu * (1 - math.log1p(p.delta))


def chernoff_bound(p: ChernoffParams) -> float:
    """dim * (e / (1 + delta))^(delta mu), evaluated in log space (inf on overflow)."""
    try:
        return math.exp(log_chernoff_bound(p))
    except OverflowError:
        return math.inf


# -- ball Schur factorisation --------------------------------------------------

@dataclass(frozen=True)
class SchurCheck:
    nu: float
    entry_error: float
    norm_hardy: float
    norm_factor: float
    norm_h: float
    min_eig_h: float
    factorization_ok: bool
    norm_inequality_ok: bool

    @property
    def passed(self) -> bool:
        return self.factorization_ok and self.norm_inequality_ok


def ball_schur_factor_check(seq: RandomSequence, nu: float, entry_tol: float = 1e-10) -> SchurCheck:
    """Check G^0 = G^nu (.) G^(d-nu) entrywise and ||G^0|| <= ||G^(d-nu)||."""
    d = seq.d
    if seq.domain.kind != "ball":
        raise InvalidInputError("ball_schur_factor_check needs a ball sequence")
    if not 0 < nu < d:
        raise InvalidInputError(f"nu must lie in (0, {d})")
    G0 = build_gram(KernelSpec.besov_sobolev(0.0, d), seq).entries
    H = build_gram(KernelSpec.besov_sobolev(nu, d), seq).entries
    A = build_gram(KernelSpec.besov_sobolev(d - nu, d), seq).entries
    err = float(np.max(np.abs(G0 - H * A), initial=0.0))
    eig_h = np.linalg.eigvalsh(H)
    n0 = float(np.linalg.eigvalsh(G0)[-1])
    na = float(np.linalg.eigvalsh(A)[-1])
    return SchurCheck(nu, err, n0, na, float(eig_h[-1]), float(eig_h[0]),
                      err < entry_tol, n0 <= na * (1 + 1e-8))


# -- matrix-free Szego Gramian in one variable ---------------------------------

class SzegoDiscOperator:
    """Matrix-free Gramian of normalised Szego kernels on the disc.

    Requires every band to sit on one circle (midpoint placement).  With
    a_j = sqrt(1 - r_j^2),

        (G x)_n = a_n sum_l z_n^l C_l,   C_l = sum_j a_j conj(z_j)^l x_j,

    and within a band of radius r the sums over l are non-uniform FFTs in the
    angles.  Band k only contributes to modes with r_k^l / (1 - r_k) above
    ``trunc_tol``.  Entry (n, j) agrees with :func:`build_gram`.
    """

    def __init__(self, seq: RandomSequence, eps: float = 1e-12, trunc_tol: float = 1e-14,
                 radius_tol: float = 1e-12):
        import finufft

        if seq.domain.kind != "polydisc" or seq.d != 1:
            raise InvalidInputError("SzegoDiscOperator needs a one-dimensional polydisc sequence")
        n = len(seq)
        self.shape = (n, n)
        self.dtype = np.dtype(complex)
        theta = np.angle(seq.points[:, 0])
        radius = np.abs(seq.points[:, 0])
        bands = seq.regions[:, 0]
        self._bands = []
        for m in np.unique(bands):
            idx = np.nonzero(bands == m)[0]
            r = float(np.mean(radius[idx]))
            if np.max(np.abs(radius[idx] - r)) > radius_tol:
                raise InvalidInputError("SzegoDiscOperator needs one radius per band (midpoint placement)")
            L = 1 if r == 0 else max(1, math.ceil(math.log(trunc_tol * (1 - r)) / math.log(r)))
            modes = L + 1
            shift = modes // 2
            t = theta[idx]
            p1 = finufft.Plan(1, (modes,), eps=eps, isign=-1)
            p1.setpts(t)
            p2 = finufft.Plan(2, (modes,), eps=eps, isign=1)
            p2.setpts(t)
            # finufft modes run from -shift; the phase moves them to 0..L
            phase = np.exp(-1j * shift * t)
            weights = r ** np.arange(modes)
            self._bands.append((idx, math.sqrt(1 - r * r), modes, phase, weights, p1, p2))
        self._modes = max((b[2] for b in self._bands), default=0)

    def matvec(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=complex).reshape(-1)
        C = np.zeros(self._modes, dtype=complex)
        for idx, a, modes, phase, weights, p1, _ in self._bands:
            C[:modes] += p1.execute(a * x[idx] * phase) * weights
        y = np.empty_like(x)
        for idx, a, modes, phase, weights, _, p2 in self._bands:
            y[idx] = a * phase.conj() * p2.execute(C[:modes] * weights)
        return y

    __matmul__ = matvec


def gram_operator(spec: KernelSpec, seq: RandomSequence, dense_cap: int = DENSE_CAP,
                  fast_threshold: int = FAST_THRESHOLD):
    """The matrix-free Szego operator where it applies, dense Gram entries otherwise."""
    fast_ok = spec.family == SZEGO and spec.d == 1 and seq.placement == MIDPOINT
    if fast_ok and len(seq) > fast_threshold:
        return SzegoDiscOperator(seq)
    if len(seq) <= dense_cap:
        return build_gram(spec, seq, cap=dense_cap).entries
    raise ResourceLimitError("dense Gram matrix size", len(seq), dense_cap)


def gram_norm(spec: KernelSpec, seq: RandomSequence, method: str = "lanczos", tol: float = 1e-8,
              max_iter: int = 10_000, seed: int = 0, dense_cap: int = DENSE_CAP,
              fast_threshold: int = FAST_THRESHOLD) -> NormEstimate:
    if len(seq) == 0:
        return NormEstimate(0.0, 0, True, method)
    return operator_norm(gram_operator(spec, seq, dense_cap, fast_threshold), tol=tol, max_iter=max_iter,
                         seed=seed, method=method)
