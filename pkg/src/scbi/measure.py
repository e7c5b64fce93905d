"""Atomic measures on the simplex and the SCBI transition operators.

An ``AtomicMeasure`` is the law of the learner's posterior: finitely many
points of the simplex with positive weights.  ``psi_step`` pushes it through
one round of cooperative teaching of ``h``; ``psi_uniform_step`` does the same
with data drawn uniformly, which is how learner-side drift is analysed.
"""

from __future__ import annotations

import logging
import warnings
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .core import SIMPLEX_TOL
from .errors import BoundaryPrior, DegenerateVector, DimensionMismatch, TooManyAtoms
from .estimators import EpisodeConfig, Mode, episode_uniforms, simulate
from .sinkhorn import DEFAULT_CONFIG, SinkhornConfig, scbi_factors

log = logging.getLogger(__name__)

ATOM_CAP = 10_000_000


@dataclass
class AtomicMeasure:
    """Weights ``(K,)`` and points ``(K, m)``; zero-weight atoms are dropped."""

    weights: np.ndarray
    points: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).ravel()
        P = np.atleast_2d(np.asarray(self.points, dtype=float))
        if P.shape[0] != w.size:
            raise DimensionMismatch(f"{w.size} weights for {P.shape[0]} points")
        if np.any(w < 0):
            raise DegenerateVector("atom weights must be non-negative")
        if abs(w.sum() - 1.0) > SIMPLEX_TOL:
            raise DegenerateVector(f"atom weights sum to {w.sum():.15g}")
        keep = w > 0
        self.weights, self.points = w[keep], P[keep]

    @classmethod
    def dirac(cls, theta) -> "AtomicMeasure":
        return cls(np.ones(1), np.asarray(theta, dtype=float)[None, :])

    @classmethod
    def mixture(cls, parts) -> "AtomicMeasure":
        """Convex combination from ``[(a_i, mu_i), ...]``."""
        w = np.concatenate([a * mu.weights for a, mu in parts])
        P = np.concatenate([mu.points for _, mu in parts])
        return cls(w, P)

    def __len__(self) -> int:
        return self.weights.size

    def __iter__(self):
        return iter(zip(self.weights, self.points))

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def canonical(self, decimals: int = 12) -> "AtomicMeasure":
        """Merge coincident atoms (after rounding) and sort lexicographically."""
        key = np.round(self.points, decimals)
        uniq, inv = np.unique(key, axis=0, return_inverse=True)
        w = np.bincount(inv.ravel(), weights=self.weights, minlength=uniq.shape[0])
        pts = np.zeros_like(uniq)
        np.add.at(pts, inv.ravel(), self.points * self.weights[:, None])
        return AtomicMeasure(w, pts / w[:, None])

    def merged(self, tol: float = 1e-12) -> "AtomicMeasure":
        """Merge atoms whose points agree within ``tol`` in L-infinity."""
        decimals = max(0, int(round(-np.log10(tol))))
        return self.canonical(decimals)

    def mass_between(self, h: int, lo: float, hi: float) -> float:
        x = self.points[:, h]
        return float(self.weights[(x >= lo) & (x <= hi)].sum())


# -- functionals -------------------------------------------------------------

def component(h: int):
    return lambda P: P[:, h]


def ratio(h_other: int, h: int):
    return lambda P: P[:, h_other] / P[:, h]


def log_odds(h: int):
    def f(P):
        p = P[:, h]
        return np.log(p) - np.log1p(-p)
    return f


def expectation(mu: AtomicMeasure, functional) -> float:
    """``sum_i w_i f(theta_i)`` for a vectorized functional ``f(points) -> values``."""
    with np.errstate(divide="raise", invalid="raise"):
        try:
            vals = functional(mu.points)
        except FloatingPointError as exc:
            raise BoundaryPrior("functional undefined on a boundary atom") from exc
    return float(np.dot(mu.weights, vals))


def variance(mu: AtomicMeasure, functional) -> float:
    vals = functional(mu.points)
    mean = np.dot(mu.weights, vals)
    return float(np.dot(mu.weights, (vals - mean) ** 2))


# -- operators ---------------------------------------------------------------

_CHUNK = 1 << 15


def _fan_out(M: np.ndarray, mu: AtomicMeasure, h: int | None, cfg: SinkhornConfig):
    """Children of every atom under one SCBI round, processed in chunks of atoms.

    With ``h`` the child weights are the teacher's probabilities ``tau``;
    with ``h=None`` every datum gets weight ``1/n``.
    """
    n, m = M.shape
    K = len(mu)
    weights = np.empty(K * n)
    points = np.empty((K * n, m))
    for start in range(0, K, _CHUNK):
        stop = min(start + _CHUNK, K)
        P = mu.points[start:stop]
        a, beta, _ = scbi_factors(M, P, cfg)
        # S[k, i, :] is row i of M^<n theta_k>
        S = a[:, :, None] * M[None] * (P * beta)[:, None, :]
        if h is None:
            tau = np.full(a.shape, 1.0 / n)
        else:
            tau = a * M[:, h] * beta[:, h, None] / n
        weights[start * n:stop * n] = (mu.weights[start:stop, None] * tau).ravel()
        pts = S.reshape(-1, m)
        points[start * n:stop * n] = pts / pts.sum(axis=1, keepdims=True)
    return AtomicMeasure(weights / weights.sum(), points)


def psi_step(M, h: int, mu: AtomicMeasure, cfg: SinkhornConfig = DEFAULT_CONFIG) -> AtomicMeasure:
    """One round of SCBI teaching ``h`` applied to the law of the posterior.

    Atom ``(w, theta)`` becomes ``n`` atoms ``(w tau_i(theta), T_i(theta))``.
    Output atoms are ordered atom-major, datum-minor, so after ``k`` steps
    from a Dirac mass atom ``j`` corresponds to the data path whose base-``n``
    digits spell ``j``.
    """
    M = np.asarray(M, dtype=float)
    if np.any(mu.points[:, h] <= 0):
        raise BoundaryPrior("psi_step needs theta(h) > 0 on every atom")
    return _fan_out(M, mu, h, cfg)


def psi_uniform_step(L, mu: AtomicMeasure, cfg: SinkhornConfig = DEFAULT_CONFIG) -> AtomicMeasure:
    """Learner update under uniformly distributed data: each atom splits into ``n`` equal parts.

    Vertices of the simplex are fixed points, so boundary atoms are allowed.
    """
    return _fan_out(np.asarray(L, dtype=float), mu, None, cfg)


def exact_distribution(M, h: int, theta0, k: int, cap: int = ATOM_CAP, merge: bool = False,
                       cfg: SinkhornConfig = DEFAULT_CONFIG) -> AtomicMeasure:
    """Law of the SCBI posterior after ``k`` rounds, started from ``delta_{theta0}``.

    Exact ``n^k``-atom tree unless ``merge`` collapses coincident atoms after
    each round.
    """
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    if n ** k > cap:
        raise TooManyAtoms(f"{n}^{k} atoms exceeds the cap of {cap}; use Monte Carlo")
    mu = AtomicMeasure.dirac(theta0)
    for _ in range(k):
        mu = psi_step(M, h, mu, cfg)
        if merge:
            mu = mu.merged()
    return mu


# -- successful rate -----------------------------------------------------------

@dataclass
class SuccessRateEstimate:
    value: float
    std_error: float
    episodes: int
    stop_round_histogram: dict[int, int] = field(default_factory=dict)
    capped: int = 0


def successful_rate(cfg: EpisodeConfig, episodes: int, stop_threshold: float = 1 - 1e-6,
                    k_max: int = 3000, first_episode: int = 0,
                    sinkhorn: SinkhornConfig = DEFAULT_CONFIG) -> SuccessRateEstimate:
    """Monte Carlo estimate of the learner's eventual mass on the true hypothesis.

    Each episode runs until the teacher's own posterior on ``h`` reaches
    ``stop_threshold`` (or ``k_max`` rounds) and contributes the learner's
    posterior on ``h`` at that moment.  Episode ``i`` draws from the stream
    seeded by ``(cfg.seed, first_episode + i)``, so two calls with the same
    seed see identical teacher randomness (common random numbers).
    """
    if cfg.mode is not Mode.SCBI:
        raise ValueError("successful rate is defined for SCBI episodes")
    if episodes < 1:
        raise ValueError("need at least one episode")
    h = cfg.true_hypothesis
    u = episode_uniforms(cfg.seed, range(first_episode, first_episode + episodes), k_max)
    res = simulate(cfg.teacher_matrix, cfg.learner_matrix, cfg.teacher_prior, cfg.learner_prior,
                   h, Mode.SCBI, uniforms=u, stop_threshold=stop_threshold, cfg=sinkhorn)
    vals = np.exp(res.learner_log[:, h])
    value = float(vals.mean())
    se = float(vals.std(ddof=1) / np.sqrt(episodes)) if episodes > 1 else 0.0
    hist = dict(sorted(Counter(res.stop_round.tolist()).items()))
    capped = int(np.sum(res.teacher_log[:, h] < np.log(stop_threshold)))
    if capped > 0.01 * episodes:
        msg = f"{capped}/{episodes} episodes reached k_max={k_max} without stopping"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        log.warning(msg)
    return SuccessRateEstimate(value, se, episodes, hist, capped)
