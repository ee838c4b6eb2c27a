"""Occupancy statistics for n points dropped uniformly into N boxes.

mu_r(n, N) counts boxes holding exactly r points.  Its exact law follows
from the Poissonisation identity

    P(mu_r = k) = C(N, k) p_r^k (1 - p_r)^(N-k) P(zeta^(r)_{N-k} = n - k r) / P(zeta_N = n),

where zeta_N is Poisson with mean n and zeta^(r)_m is a sum of m i.i.d.
Poisson(alpha) variables conditioned to avoid the value r.  The law of
zeta^(r)_m is computed by repeated squaring of the truncated-Poisson pmf.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.signal import fftconvolve
from scipy.special import gammaln
from scipy.stats import poisson

from .errors import InvalidInputError, ResourceLimitError
from .sequences import make_rng

POISSON_TAIL = 1e-16
BRUTE_FORCE_CAP = 10**7
_DIRECT_CONV_LIMIT = 400_000_000   # FFT round-off swamps deep tails, so prefer direct sums


@dataclass(frozen=True)
class OccupancyProblem:
    n: int
    N: int
    r: int

    def __post_init__(self):
        for name in ("n", "N", "r"):
            v = getattr(self, name)
            if int(v) != v:
                raise InvalidInputError(f"{name} must be an integer")
        if self.n < 0 or self.N < 1:
            raise InvalidInputError("need n >= 0 points and N >= 1 boxes")
        if self.r < 2:
            raise InvalidInputError("occupancy r must be at least 2")

    @property
    def alpha(self) -> float:
        return self.n / self.N

    @property
    def p_r(self) -> float:
        a = self.alpha
        if a == 0:
            return 0.0
        return math.exp(self.r * math.log(a) - a - math.lgamma(self.r + 1))

    @property
    def alpha_r(self) -> float:
        p = self.p_r
        return (self.alpha - self.r * p) / (1 - p)

    @property
    def sigma2_r(self) -> float:
        a, p, r = self.alpha, self.p_r, self.r
        if a == 0:
            return 0.0
        return a / (1 - p) * (1 - p - (a - r) ** 2 * p / a)

    @property
    def max_k(self) -> int:
        return min(self.N, self.n // self.r)


def support_cap(alpha: float, r: int, limit: int) -> int:
    """Last support point kept for Poisson(alpha): the tail beyond it is below 1e-16."""
    if alpha == 0:
        return max(0, min(limit, r + 1))
    cap = int(poisson.isf(POISSON_TAIL, alpha)) + 1
    return max(0, min(limit, max(cap, r + 1)))


def truncated_poisson_pmf(alpha: float, r: int, cap: int) -> np.ndarray:
    """pmf of Poisson(alpha) conditioned on != r, on 0..cap."""
    q = poisson.pmf(np.arange(cap + 1), alpha)
    pr = float(poisson.pmf(r, alpha))
    if r <= cap:
        q[r] = 0.0
    return q / (1.0 - pr)


def _convolve(a: np.ndarray, b: np.ndarray, length: int) -> np.ndarray:
    if len(a) * len(b) <= _DIRECT_CONV_LIMIT or min(len(a), len(b)) < 64:
        out = np.convolve(a, b)
    else:
        out = np.clip(fftconvolve(a, b), 0.0, None)
    return out[:length]


def convolution_power(q: np.ndarray, m: int, length: int) -> np.ndarray:
    """m-fold self-convolution of ``q`` truncated to ``length`` entries."""
    if m < 0:
        raise InvalidInputError("convolution power must be nonnegative")
    result = np.zeros(length)
    result[0] = 1.0
    base = np.asarray(q, dtype=float)[:length]
    first = True
    while m:
        if m & 1:
            result = base.copy() if first else _convolve(result, base, length)
            first = False
        m >>= 1
        if m:
            base = _convolve(base, base, length)
    return result


@dataclass(frozen=True)
class ExactProb:
    value: float
    log_value: float
    underflow: bool
    support_cap: int


def _log_binomial_weight(pb: OccupancyProblem, k: int) -> float:
    N, p = pb.N, pb.p_r
    if p == 0.0:
        return 0.0 if k == 0 else -math.inf
    return (gammaln(N + 1) - gammaln(k + 1) - gammaln(N - k + 1)
            + k * math.log(p) + (N - k) * math.log1p(-p))


def _combine(pb: OccupancyProblem, k: int, conv_value: float, cap: int) -> ExactProb:
    if conv_value <= 0.0:
        return ExactProb(0.0, -math.inf, conv_value < 0.0, cap)
    log_den = float(poisson.logpmf(pb.n, pb.n)) if pb.n > 0 else 0.0
    logp = _log_binomial_weight(pb, k) + math.log(conv_value) - log_den
    value = math.exp(logp)
    return ExactProb(value, logp, value == 0.0, cap)


def exact_prob_detail(pb: OccupancyProblem, k: int) -> ExactProb:
    if k < 0 or k > pb.N:
        return ExactProb(0.0, -math.inf, False, 0)
    target = pb.n - k * pb.r
    if target < 0:
        return ExactProb(0.0, -math.inf, False, 0)
    cap = support_cap(pb.alpha, pb.r, pb.n)
    q = truncated_poisson_pmf(pb.alpha, pb.r, cap)
    z = convolution_power(q, pb.N - k, target + 1)
    return _combine(pb, k, float(z[target]), cap)


def exact_prob(pb: OccupancyProblem, k: int) -> float:
    """P(mu_r(n, N) = k) from the Poissonisation identity."""
    return exact_prob_detail(pb, k).value


def exact_law(pb: OccupancyProblem) -> np.ndarray:
    """The full law P(mu_r = k), k = 0..max_k.

    One convolution power is computed for N - max_k; the remaining ones are
    reached by single convolutions with the short base pmf.
    """
    K = pb.max_k
    cap = support_cap(pb.alpha, pb.r, pb.n)
    q = truncated_poisson_pmf(pb.alpha, pb.r, cap)
    length = pb.n + 1
    z = convolution_power(q, pb.N - K, length)
    law = np.zeros(K + 1)
    for k in range(K, -1, -1):
        law[k] = _combine(pb, k, float(z[pb.n - k * pb.r]), cap).value
        if k:
            z = _convolve(z, q, length)
    return law


def expected_count(pb: OccupancyProblem) -> float:
    """E mu_r = N C(n, r) N^-r (1 - 1/N)^(n - r), the binomial box-count mean."""
    if pb.r > pb.n:
        return 0.0
    if pb.N == 1:
        return 1.0 if pb.n == pb.r else 0.0
    logv = (math.log(pb.N) + math.lgamma(pb.n + 1) - math.lgamma(pb.r + 1) - math.lgamma(pb.n - pb.r + 1)
            - pb.r * math.log(pb.N) + (pb.n - pb.r) * math.log1p(-1 / pb.N))
    return math.exp(logv)


@lru_cache(maxsize=256)
def _brute_force_law(n: int, N: int, r: int) -> tuple:
    total = N ** n
    counts = np.zeros(N + 1, dtype=np.int64)
    chunk = max(1, 2_000_000 // max(n, 1))
    codes_all = np.arange(total, dtype=np.int64)
    for lo in range(0, total, chunk):
        codes = codes_all[lo:lo + chunk]
        occ = np.zeros((len(codes), N), dtype=np.int64)
        rows = np.arange(len(codes))
        c = codes.copy()
        for _ in range(n):
            np.add.at(occ, (rows, c % N), 1)
            c //= N
        mu = np.sum(occ == r, axis=1)
        counts += np.bincount(mu, minlength=N + 1)
    return tuple(int(v) for v in counts)


def brute_force_prob(pb: OccupancyProblem, k: int) -> Fraction:
    """Exact P(mu_r = k) by enumerating all N^n equally likely assignments."""
    if pb.N ** pb.n > BRUTE_FORCE_CAP:
        raise ResourceLimitError("assignments to enumerate", pb.N ** pb.n, BRUTE_FORCE_CAP)
    if k < 0 or k > pb.N:
        return Fraction(0)
    counts = _brute_force_law(pb.n, pb.N, pb.r)
    return Fraction(counts[k], pb.N ** pb.n)


def normal_approx(pb: OccupancyProblem, m: int, l):
    """Local normal value (sigma_r sqrt(2 pi m))^-1 exp(-(l - m alpha_r)^2 / (2 m sigma_r^2))."""
    if m < 1:
        raise InvalidInputError("m must be at least 1")
    s2 = pb.sigma2_r
    if not s2 > 0:
        raise InvalidInputError(f"sigma_r^2 = {s2} is not positive")
    l = np.asarray(l, dtype=float)
    out = np.exp(-(l - m * pb.alpha_r) ** 2 / (2 * m * s2)) / math.sqrt(2 * math.pi * m * s2)
    return float(out) if out.ndim == 0 else out


def truncated_sum_pmf(pb: OccupancyProblem, m: int, length: int) -> np.ndarray:
    """Exact pmf of zeta^(r)_m on 0..length-1."""
    cap = support_cap(pb.alpha, pb.r, length - 1)
    return convolution_power(truncated_poisson_pmf(pb.alpha, pb.r, cap), m, length)


def ratio_check(pb: OccupancyProblem) -> float:
    """P(mu_r = 1) / (N p_r)."""
    denom = pb.N * pb.p_r
    if denom == 0:
        raise InvalidInputError("N p_r vanishes")
    return exact_prob(pb, 1) / denom


@dataclass(frozen=True)
class OccupancyHistogram:
    pmf: np.ndarray
    se: np.ndarray
    trials: int


def simulate_occupancy(pb: OccupancyProblem, trials: int, seed: int = 0) -> OccupancyHistogram:
    """Empirical law of mu_r from seeded uniform assignments."""
    if trials < 1:
        raise InvalidInputError("trials must be at least 1")
    rng = make_rng(seed)
    counts = np.zeros(pb.max_k + 1, dtype=np.int64)
    chunk = max(1, 5_000_000 // max(pb.N, pb.n, 1))
    done = 0
    while done < trials:
        t = min(chunk, trials - done)
        boxes = rng.integers(0, pb.N, size=(t, pb.n))
        flat = (boxes + pb.N * np.arange(t)[:, None]).reshape(-1)
        occ = np.bincount(flat, minlength=t * pb.N).reshape(t, pb.N)
        counts += np.bincount(np.sum(occ == pb.r, axis=1), minlength=pb.max_k + 1)
        done += t
    pmf = counts / trials
    return OccupancyHistogram(pmf, np.sqrt(pmf * (1 - pmf) / trials), trials)

