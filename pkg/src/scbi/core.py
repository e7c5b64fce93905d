"""Simplex vectors, positive matrices, normalizations and divergences.

Vectors and matrices are plain ``numpy`` arrays; the ``as_*`` helpers check
the invariants once at the boundary and hand back float64 copies.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import DegenerateVector, DimensionMismatch, InvalidMatrix, SupportMismatch

SIMPLEX_TOL = 1e-9
FRESH_TOL = 1e-12
DISTINCT_TOL = 1e-12


def as_probability_vector(v, tol: float = SIMPLEX_TOL) -> np.ndarray:
    """Validate ``v`` as a point of the simplex and return it as float64."""
    p = np.array(v, dtype=float)
    if p.ndim != 1 or p.size < 1:
        raise DimensionMismatch(f"probability vector must be 1-d and non-empty, got shape {p.shape}")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise DegenerateVector(f"probability vector has negative or non-finite entries: {p}")
    if abs(p.sum() - 1.0) > tol:
        raise DegenerateVector(f"probability vector sums to {p.sum():.15g}, not 1")
    return p


def is_interior(p) -> bool:
    return bool(np.all(np.asarray(p) > 0))


def as_positive_matrix(M, check_distinct: bool = True, check_shape: bool = True) -> np.ndarray:
    """Validate a strictly positive ``n x m`` matrix.

    ``check_shape`` enforces ``n >= m``; ``check_distinct`` rejects any pair of
    columns that are scalar multiples of each other.
    """
    A = np.array(M, dtype=float)
    if A.ndim != 2 or min(A.shape) < 1:
        raise InvalidMatrix(f"matrix must be 2-d, got shape {A.shape}")
    if not np.all(np.isfinite(A)) or np.any(A <= 0):
        raise InvalidMatrix("matrix entries must be finite and strictly positive")
    n, m = A.shape
    if check_shape and n < m:
        raise InvalidMatrix(f"need at least as many data as hypotheses, got {n}x{m}")
    if check_distinct and not columns_distinguishable(A):
        raise InvalidMatrix("two columns are scalar multiples of each other")
    return A


def columns_distinguishable(M: np.ndarray, tol: float = DISTINCT_TOL) -> bool:
    """True when no two normalized columns are within ``tol`` in L-infinity."""
    C = M / M.sum(axis=0, keepdims=True)
    for i, j in combinations(range(C.shape[1]), 2):
        if np.max(np.abs(C[:, i] - C[:, j])) <= tol:
            return False
    return True


@dataclass(frozen=True)
class MarginalSpec:
    """Target row sums ``r`` and column sums ``c`` for matrix scaling."""

    row_sums: np.ndarray
    col_sums: np.ndarray

    def __post_init__(self):
        r = np.array(self.row_sums, dtype=float)
        c = np.array(self.col_sums, dtype=float)
        if r.ndim != 1 or c.ndim != 1:
            raise DimensionMismatch("marginals must be 1-d")
        if np.any(r <= 0) or np.any(c <= 0):
            raise DegenerateVector("marginals must be strictly positive")
        if abs(r.sum() - c.sum()) > SIMPLEX_TOL * max(1.0, r.sum()):
            raise DegenerateVector(f"row total {r.sum():.12g} differs from column total {c.sum():.12g}")
        object.__setattr__(self, "row_sums", r)
        object.__setattr__(self, "col_sums", c)


def normalize_vector(v, s: float = 1.0) -> np.ndarray:
    """Rescale a non-negative vector so its entries sum to ``s``."""
    v = np.asarray(v, dtype=float)
    if s <= 0:
        raise ValueError("target sum must be positive")
    total = v.sum()
    if not total > 0:
        raise DegenerateVector("cannot normalize a vector with no positive mass")
    return v * (s / total)


def normalize_columns(M, targets=None) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    targets = np.ones(M.shape[1]) if targets is None else np.asarray(targets, dtype=float)
    return M * (targets / M.sum(axis=0))


def normalize_rows(M, targets=None) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    targets = np.ones(M.shape[0]) if targets is None else np.asarray(targets, dtype=float)
    return M * (targets / M.sum(axis=1))[:, None]


def cross_ratios(M) -> np.ndarray:
    """All 2x2 cross-ratios ``M[i,j] M[k,l] / (M[i,l] M[k,j])`` for i<k, j<l.

    Two positive matrices are diagonal rescalings of each other exactly when
    these agree.
    """
    L = np.log(np.asarray(M, dtype=float))
    n, m = L.shape
    ii, kk = np.triu_indices(n, 1)
    jj, ll = np.triu_indices(m, 1)
    out = (L[ii][:, jj] + L[kk][:, ll]) - (L[ii][:, ll] + L[kk][:, jj])
    return np.exp(out).ravel()


def kl_divergence(p, q) -> float:
    """KL(p || q) in nats with ``0 ln 0 = 0``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise DimensionMismatch(f"shapes differ: {p.shape} vs {q.shape}")
    support = p > 0
    if np.any(q[support] <= 0):
        raise SupportMismatch("q vanishes where p has mass")
    ps, qs = p[support], q[support]
    return max(float(np.sum(ps * np.log(ps / qs))), 0.0)


def l1_distance(p, q) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise DimensionMismatch(f"shapes differ: {p.shape} vs {q.shape}")
    return float(np.abs(p - q).sum())


def sample_simplex_uniform(dim: int, rng: np.random.Generator, size=None) -> np.ndarray:
    """Flat-Dirichlet draw(s) via normalized unit-rate exponentials."""
    if dim < 2:
        raise ValueError("simplex dimension must be at least 2")
    shape = (dim,) if size is None else (*np.atleast_1d(size), dim)
    e = rng.standard_exponential(shape)
    return e / e.sum(axis=-1, keepdims=True)


def sample_column_stochastic(n: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """Matrix whose ``m`` columns are independent uniform draws on the ``n``-simplex."""
    if not n >= m >= 2:
        raise ValueError(f"need n >= m >= 2, got {n}x{m}")
    while True:
        M = sample_simplex_uniform(n, rng, size=m).T
        if np.all(M > 0) and columns_distinguishable(M):
            return M


def sample_column_stochastic_batch(n: int, m: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` independent column-stochastic matrices, shape ``(count, n, m)``.

    Draws the same stream as ``count`` calls of :func:`sample_column_stochastic`
    except that the (probability zero) resampling step is skipped.
    """
    e = rng.standard_exponential((count, m, n))
    return np.swapaxes(e / e.sum(axis=-1, keepdims=True), 1, 2)
