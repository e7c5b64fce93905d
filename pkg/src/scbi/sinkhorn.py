"""(r, c)-Sinkhorn scaling and the per-round SCBI scaled matrix.

``sinkhorn_scale`` is the literal alternation of row and column
normalization.  ``scbi_factors`` runs the same alternation for a whole batch
of priors at once, with the prior factored out of the column scaling so that
posteriors with entries far below the float range still scale correctly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import MarginalSpec, as_positive_matrix, as_probability_vector, cross_ratios
from .errors import BoundaryPrior, DimensionMismatch, NonConvergence


@dataclass(frozen=True)
class SinkhornConfig:
    tolerance: float = 1e-12
    max_iterations: int = 10_000

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


DEFAULT_CONFIG = SinkhornConfig()


@dataclass
class SinkhornResult:
    scaled: np.ndarray
    iterations: int
    final_error: float
    history: list[float] = field(default_factory=list)


def sinkhorn_scale(M, marginals: MarginalSpec, cfg: SinkhornConfig = DEFAULT_CONFIG,
                   record: bool = False) -> SinkhornResult:
    """Alternate row and column normalization until the marginals match.

    The error is the L-infinity deviation of the row sums from ``r``, measured
    right after the column step (column sums are exact at that point).  With
    ``record`` the error after every sweep is kept in ``history``.
    """
    A = as_positive_matrix(M, check_distinct=False, check_shape=False)
    r, c = marginals.row_sums, marginals.col_sums
    if A.shape != (r.size, c.size):
        raise DimensionMismatch(f"matrix {A.shape} does not match marginals ({r.size}, {c.size})")
    history = []
    err = float(max(np.max(np.abs(A.sum(axis=1) - r)), np.max(np.abs(A.sum(axis=0) - c))))
    if err <= cfg.tolerance:
        return SinkhornResult(A, 0, err, history)
    for it in range(1, cfg.max_iterations + 1):
        A *= (r / A.sum(axis=1))[:, None]
        A *= c / A.sum(axis=0)
        err = float(np.max(np.abs(A.sum(axis=1) - r)))
        if record:
            history.append(err)
        if err <= cfg.tolerance:
            return SinkhornResult(A, it, err, history)
    raise NonConvergence(f"Sinkhorn did not reach {cfg.tolerance:g} in {cfg.max_iterations} sweeps",
                         final_error=err, iterations=cfg.max_iterations)


def scbi_scaled(M, theta, cfg: SinkhornConfig = DEFAULT_CONFIG) -> np.ndarray:
    """``M^<n theta>``: rows summing to 1, column ``j`` summing to ``n theta(j)``."""
    theta = as_probability_vector(theta)
    if not np.all(theta > 0):
        raise BoundaryPrior(f"prior must be interior, got {theta}")
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    return sinkhorn_scale(M, MarginalSpec(np.ones(n), n * theta), cfg).scaled


def scale_equivalence_check(T, L, rtol: float = 1e-9) -> bool:
    """True when ``T = E1 L E2`` for positive diagonal ``E1``, ``E2``."""
    T = np.asarray(T, dtype=float)
    L = np.asarray(L, dtype=float)
    if T.shape != L.shape:
        return False
    if min(T.shape) < 2:
        return True
    return bool(np.allclose(cross_ratios(T), cross_ratios(L), rtol=rtol, atol=0.0))


def scbi_factors(M, thetas, cfg: SinkhornConfig = DEFAULT_CONFIG):
    """Row and (prior-free) column factors of ``M^<n theta>`` for many priors.

    Returns ``(a, beta, iterations)`` with ``a`` of shape ``(B, n)`` and
    ``beta`` of shape ``(B, m)`` such that
    ``M^<n theta_b>[i, j] = a[b, i] * M[i, j] * theta_b[j] * beta[b, j]``.

    Keeping ``theta`` out of the column factor makes the scaling well defined
    on the boundary of the simplex (zero entries simply drop out of the row
    sums), which is what long runs near a vertex need.
    """
    M = np.asarray(M, dtype=float)
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    n, m = M.shape
    if thetas.shape[1] != m:
        raise DimensionMismatch(f"priors have {thetas.shape[1]} entries, matrix has {m} columns")
    MT = M.T
    a = np.ones((thetas.shape[0], n))
    for it in range(1, cfg.max_iterations + 1):
        beta = n / (a @ M)
        inv_a = (thetas * beta) @ MT
        err = float(np.max(np.abs(a * inv_a - 1.0)))
        a = 1.0 / inv_a
        if err <= cfg.tolerance:
            beta = n / (a @ M)
            return a, beta, it
    raise NonConvergence(f"batched Sinkhorn did not reach {cfg.tolerance:g} in {cfg.max_iterations} sweeps",
                         final_error=err, iterations=cfg.max_iterations)


def scbi_scaled_batch(M, thetas, cfg: SinkhornConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Stack of ``M^<n theta_b>``, shape ``(B, n, m)``."""
    M = np.asarray(M, dtype=float)
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    a, beta, _ = scbi_factors(M, thetas, cfg)
    return a[:, :, None] * M[None] * (thetas * beta)[:, None, :]
