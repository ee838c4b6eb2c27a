"""Points, reproducing kernels and pseudo-hyperbolic distances.

Two ambient domains are supported: the polydisc D^d and the unit ball B_d of
C^d.  Kernels:

* ``szego``          prod_i 1 / (1 - conj(w_i) z_i)                (polydisc)
* ``dirichlet(a)``   prod_i (1 - conj(w_i) z_i)^-(1-a), a in [0, 1);
                     prod_i (1/x) log(1/(1-x)), x = conj(w_i) z_i, at a = 1
* ``besov_sobolev(a)``  (1 - <z, w>)^-(d-a), a in [0, d)            (ball)

Everything is double precision.  The vectorised helpers operate on complex
arrays of shape ``(n, d)``; the scalar functions wrap them for single points.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidInputError

BOUNDARY_GUARD = 1e-12
_LOG_SERIES_CUTOFF = 1e-4
_LOG_SERIES_TERMS = 8

POLYDISC = "polydisc"
BALL = "ball"


@dataclass(frozen=True)
class Domain:
    kind: str
    d: int

    def __post_init__(self):
        if self.kind not in (POLYDISC, BALL):
            raise InvalidInputError(f"unknown domain kind {self.kind!r}")
        if int(self.d) != self.d or self.d < 1:
            raise InvalidInputError(f"dimension must be a positive integer, got {self.d}")

    @classmethod
    def polydisc(cls, d: int) -> "Domain":
        return cls(POLYDISC, d)

    @classmethod
    def ball(cls, d: int) -> "Domain":
        return cls(BALL, d)

    def __str__(self):
        return f"{self.kind}({self.d})"


def as_points(z, domain: Domain) -> np.ndarray:
    """Validate and return a complex array of shape (n, d) for `domain`.

    A 1-d input is read as a single point when ``domain.d > 1`` and as ``n``
    one-dimensional points otherwise.
    """
    arr = np.asarray(z, dtype=complex)
    if arr.size == 0:
        return np.zeros((0, domain.d), dtype=complex)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1) if domain.d == 1 else arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != domain.d:
        raise InvalidInputError(f"expected points of dimension {domain.d}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("non-finite coordinates")
    if domain.kind == POLYDISC:
        slack = 1.0 - np.abs(arr)
    else:
        slack = 1.0 - np.sqrt(np.sum(np.abs(arr) ** 2, axis=1))
    if arr.size and np.min(slack) < BOUNDARY_GUARD:
        raise InvalidInputError(f"point on or outside the boundary of {domain}")
    return arr


@dataclass(frozen=True)
class Point:
    """A point of the polydisc or the ball, validated on construction."""

    coords: tuple
    domain: Domain

    def __post_init__(self):
        coords = tuple(complex(c) for c in self.coords)
        object.__setattr__(self, "coords", coords)
        as_points(np.array(coords), self.domain)

    @classmethod
    def polydisc(cls, *coords) -> "Point":
        return cls(tuple(coords), Domain.polydisc(len(coords)))

    @classmethod
    def ball(cls, *coords) -> "Point":
        return cls(tuple(coords), Domain.ball(len(coords)))

    @property
    def d(self) -> int:
        return self.domain.d

    def array(self) -> np.ndarray:
        return np.array(self.coords, dtype=complex).reshape(1, -1)


SZEGO = "szego"
DIRICHLET = "dirichlet"
BESOV_SOBOLEV = "besov_sobolev"
FAMILIES = (SZEGO, DIRICHLET, BESOV_SOBOLEV)


@dataclass(frozen=True)
class KernelSpec:
    family: str
    d: int
    a: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidInputError(f"unknown kernel family {self.family!r}")
        if int(self.d) != self.d or self.d < 1:
            raise InvalidInputError("kernel dimension must be a positive integer")
        a = float(self.a)
        object.__setattr__(self, "a", a)
        if self.family == SZEGO and a != 0.0:
            raise InvalidInputError("the Szego kernel has no parameter")
        if self.family == DIRICHLET and not 0.0 <= a <= 1.0:
            raise InvalidInputError(f"Dirichlet parameter must lie in [0, 1], got {a}")
        if self.family == BESOV_SOBOLEV and not 0.0 <= a < self.d:
            raise InvalidInputError(f"Besov-Sobolev parameter must lie in [0, d), got {a}")

    @classmethod
    def szego(cls, d: int) -> "KernelSpec":
        return cls(SZEGO, d)

    @classmethod
    def dirichlet(cls, a: float, d: int) -> "KernelSpec":
        return cls(DIRICHLET, d, a)

    @classmethod
    def besov_sobolev(cls, a: float, d: int) -> "KernelSpec":
        return cls(BESOV_SOBOLEV, d, a)

    @property
    def domain(self) -> Domain:
        kind = BALL if self.family == BESOV_SOBOLEV else POLYDISC
        return Domain(kind, self.d)

    @property
    def coordinate_exponent(self) -> float:
        """Power p in (1 - x)^-p per factor (polydisc) or for the ball kernel."""
        if self.family == BESOV_SOBOLEV:
            return self.d - self.a
        return 1.0 - self.a

    @property
    def logarithmic(self) -> bool:
        return self.family == DIRICHLET and self.a == 1.0


def _check_domain(spec: KernelSpec, domain: Domain):
    if spec.domain != domain:
        raise InvalidInputError(f"kernel {spec.family} lives on {spec.domain}, points on {domain}")


def _log_factor(x: np.ndarray) -> np.ndarray:
    """(1/x) log(1/(1-x)), with the Taylor series near x = 0."""
    x = np.asarray(x, dtype=complex)
    out = np.empty_like(x)
    small = np.abs(x) < _LOG_SERIES_CUTOFF
    xs = x[small]
    acc = np.zeros_like(xs)
    for l in range(_LOG_SERIES_TERMS - 1, -1, -1):
        acc = acc * xs + 1.0 / (l + 1)
    out[small] = acc
    xb = x[~small]
    out[~small] = -np.log1p(-xb) / xb
    return out


def _factor(spec: KernelSpec, x: np.ndarray) -> np.ndarray:
    if spec.logarithmic:
        return _log_factor(x)
    p = spec.coordinate_exponent
    if p == 1.0:
        return 1.0 / (1.0 - x)
    return (1.0 - x) ** (-p)


def kernel_matrix(spec: KernelSpec, z, w) -> np.ndarray:
    """Matrix K[n, j] = k_{w_j}(z_n) for point arrays ``z`` (n, d), ``w`` (m, d)."""
    Z = as_points(z, spec.domain)
    W = as_points(w, spec.domain)
    if spec.family == BESOV_SOBOLEV:
        return _factor(spec, Z @ W.conj().T)
    K = np.ones((Z.shape[0], W.shape[0]), dtype=complex)
    for i in range(spec.d):
        K *= _factor(spec, np.outer(Z[:, i], W[:, i].conj()))
    return K


def kernel_diagonal(spec: KernelSpec, z) -> np.ndarray:
    """k_z(z) = ||k_z||^2 for every row of ``z`` (real, >= 1)."""
    Z = as_points(z, spec.domain)
    sq = np.abs(Z) ** 2
    if spec.family == BESOV_SOBOLEV:
        return np.real(_factor(spec, sq.sum(axis=1)))
    return np.real(np.prod(_factor(spec, sq), axis=1))


def normalized_matrix(spec: KernelSpec, z, w) -> np.ndarray:
    """Normalised kernel inner products k_{w_j}(z_n) / (||k_{z_n}|| ||k_{w_j}||)."""
    K = kernel_matrix(spec, z, w)
    dz = np.sqrt(kernel_diagonal(spec, z))
    dw = np.sqrt(kernel_diagonal(spec, w))
    return K / np.outer(dz, dw)


def normalized_pairs(spec: KernelSpec, z, w) -> np.ndarray:
    """Row-wise normalised values k_{w_n}(z_n) / (||k_{z_n}|| ||k_{w_n}||) for equal-length arrays."""
    Z = as_points(z, spec.domain)
    W = as_points(w, spec.domain)
    if Z.shape != W.shape:
        raise InvalidInputError(f"paired arrays differ in shape: {Z.shape} vs {W.shape}")
    if spec.family == BESOV_SOBOLEV:
        K = _factor(spec, np.sum(Z * W.conj(), axis=1))
    else:
        K = np.prod(_factor(spec, Z * W.conj()), axis=1)
    return K / np.sqrt(kernel_diagonal(spec, Z) * kernel_diagonal(spec, W))


def _pair(spec_or_domain, z: Point, w: Point) -> Domain:
    if z.domain != w.domain:
        raise InvalidInputError(f"points live in different domains: {z.domain} vs {w.domain}")
    if isinstance(spec_or_domain, KernelSpec):
        _check_domain(spec_or_domain, z.domain)
    return z.domain


def kernel_eval(spec: KernelSpec, z: Point, w: Point) -> complex:
    """Reproducing kernel k_w(z)."""
    _pair(spec, z, w)
    return complex(kernel_matrix(spec, z.array(), w.array())[0, 0])


def normalized_inner(spec: KernelSpec, z: Point, w: Point) -> complex:
    _pair(spec, z, w)
    return complex(normalized_matrix(spec, z.array(), w.array())[0, 0])


def pseudo_hyperbolic_matrix(z, w, domain: Domain) -> np.ndarray:
    """Pairwise pseudo-hyperbolic distances between rows of ``z`` and ``w``."""
    Z = as_points(z, domain)
    W = as_points(w, domain)
    if domain.kind == POLYDISC:
        out = np.zeros((Z.shape[0], W.shape[0]))
        for i in range(domain.d):
            zi = Z[:, i][:, None]
            wi = W[:, i][None, :]
            np.maximum(out, np.abs(zi - wi) / np.abs(1.0 - wi.conj() * zi), out=out)
        return out
    inner = Z @ W.conj().T
    nz = 1.0 - np.sum(np.abs(Z) ** 2, axis=1)
    nw = 1.0 - np.sum(np.abs(W) ** 2, axis=1)
    q = np.outer(nz, nw) / np.abs(1.0 - inner) ** 2
    return np.sqrt(np.clip(1.0 - q, 0.0, None))


def pseudo_hyperbolic(z: Point, w: Point) -> float:
    domain = _pair(None, z, w)
    return float(pseudo_hyperbolic_matrix(z.array(), w.array(), domain)[0, 0])


def rho_s_matrix(z, w, d: int) -> np.ndarray:
    """Hardy-space distance sqrt(1 - |<s_z, s_w>|^2 / (||s_z||^2 ||s_w||^2))."""
    g = normalized_matrix(KernelSpec.szego(d), z, w)
    return np.sqrt(np.clip(1.0 - np.abs(g) ** 2, 0.0, None))


def rho_s(z: Point, w: Point) -> float:
    domain = _pair(None, z, w)
    if domain.kind != POLYDISC:
        raise InvalidInputError("rho_s is defined on the polydisc")
    return float(rho_s_matrix(z.array(), w.array(), domain.d)[0, 0])


def schur_product(A, B) -> np.ndarray:
    """Entrywise (Schur/Hadamard) product of two equal square matrices."""
    A = np.asarray(A)
    B = np.asarray(B)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape != B.shape:
        raise InvalidInputError(f"Schur product needs equal square shapes, got {A.shape} and {B.shape}")
    return A * B


def points_of(seq_or_points: Sequence[Point]) -> np.ndarray:
    """Stack a list of Points into an (n, d) array."""
    if not seq_or_points:
        return np.zeros((0, 0), dtype=complex)
    return np.vstack([p.array() for p in seq_or_points])
