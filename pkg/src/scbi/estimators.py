"""Teacher/learner update rules for BI and SCBI, episodes, and RoC formulas.

Hypotheses and data are 0-based indices throughout the library.

Single-step functions (``bi_update``, ``scbi_update``, ...) work on ordinary
probability vectors.  ``simulate`` advances a whole batch of episodes in
log-space so that thousands of rounds can run without the posterior mass on
the wrong hypotheses underflowing to zero.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import logsumexp

from .core import (as_positive_matrix, as_probability_vector, kl_divergence, normalize_columns,
                   normalize_vector)
from .errors import BoundaryPrior, DimensionMismatch, InvalidMatrix
from .parallel import derive_rng
from .sinkhorn import DEFAULT_CONFIG, SinkhornConfig, scbi_factors, scbi_scaled


class Mode(str, enum.Enum):
    BI = "bi"
    SCBI = "scbi"


def _check_index(i: int, size: int, what: str) -> int:
    if not 0 <= int(i) < size:
        raise IndexError(f"{what} index {i} out of range 0..{size - 1}")
    return int(i)


# -- single steps -----------------------------------------------------------

def bi_teacher_distribution(M, h: int) -> np.ndarray:
    """Column ``h`` of a column-stochastic likelihood matrix."""
    M = np.asarray(M, dtype=float)
    if np.max(np.abs(M.sum(axis=0) - 1.0)) > 1e-9:
        raise InvalidMatrix("BI needs a column-stochastic matrix")
    h = _check_index(h, M.shape[1], "hypothesis")
    return M[:, h].copy()


def bi_update(M, theta, d: int) -> np.ndarray:
    """Bayes' rule with fixed likelihood row ``M[d]``."""
    M = np.asarray(M, dtype=float)
    theta = as_probability_vector(theta)
    d = _check_index(d, M.shape[0], "datum")
    return normalize_vector(M[d] * theta)


def scbi_teacher_distribution(M, theta, h: int, cfg: SinkhornConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Column ``h`` of ``M^<n theta>`` divided by ``n theta(h)``."""
    S = scbi_scaled(M, theta, cfg)
    n = S.shape[0]
    h = _check_index(h, S.shape[1], "hypothesis")
    theta = np.asarray(theta, dtype=float)
    return S[:, h] / (n * theta[h])


def scbi_update(M, theta, d: int, cfg: SinkhornConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Row ``d`` of ``M^<n theta>``, the learner's posterior after datum ``d``."""
    S = scbi_scaled(M, theta, cfg)
    d = _check_index(d, S.shape[0], "datum")
    return S[d].copy()


# -- episodes ---------------------------------------------------------------

@dataclass(frozen=True)
class EpisodeConfig:
    teacher_matrix: np.ndarray
    learner_matrix: np.ndarray
    teacher_prior: np.ndarray
    learner_prior: np.ndarray
    true_hypothesis: int = 0
    rounds: int = 10
    mode: Mode = Mode.SCBI
    seed: int = 0

    def __post_init__(self):
        T = as_positive_matrix(self.teacher_matrix)
        L = as_positive_matrix(self.learner_matrix)
        if T.shape != L.shape:
            raise DimensionMismatch(f"teacher {T.shape} and learner {L.shape} matrices differ in shape")
        pt = as_probability_vector(self.teacher_prior)
        pl = as_probability_vector(self.learner_prior)
        m = T.shape[1]
        if pt.size != m or pl.size != m:
            raise DimensionMismatch("priors must have one entry per hypothesis")
        h = _check_index(self.true_hypothesis, m, "hypothesis")
        if pt[h] <= 0 or pl[h] <= 0:
            raise BoundaryPrior("both priors must put mass on the true hypothesis")
        if self.rounds < 0:
            raise ValueError("rounds must be non-negative")
        object.__setattr__(self, "teacher_matrix", T)
        object.__setattr__(self, "learner_matrix", L)
        object.__setattr__(self, "teacher_prior", pt)
        object.__setattr__(self, "learner_prior", pl)
        object.__setattr__(self, "true_hypothesis", h)
        object.__setattr__(self, "mode", Mode(self.mode))

    @classmethod
    def shared(cls, M, prior, **kw) -> "EpisodeConfig":
        """Teacher and learner share the matrix and the prior."""
        return cls(M, M, prior, prior, **kw)


@dataclass
class EpisodeTrace:
    """One teaching sequence.

    Posterior arrays have ``rounds + 1`` rows; row 0 is the prior.  The
    log-odds columns are computed in log-space and stay finite long after
    ``1 - theta(h)`` has underflowed.
    """

    data: np.ndarray
    teacher_posteriors: np.ndarray
    learner_posteriors: np.ndarray
    teacher_log_odds: np.ndarray
    learner_log_odds: np.ndarray
    seed: int | None = None


def episode_rng(base_seed: int, episode_index: int) -> np.random.Generator:
    """Independent stream for one episode, derived from the base seed and index."""
    return derive_rng(base_seed, episode_index)


def episode_uniforms(base_seed: int, episode_ids, rounds: int) -> np.ndarray:
    """Per-episode uniform draws, shape ``(len(episode_ids), rounds)``."""
    ids = list(episode_ids)
    out = np.empty((len(ids), rounds))
    for row, i in enumerate(ids):
        out[row] = episode_rng(base_seed, i).random(rounds)
    return out


def log_odds(log_theta: np.ndarray, h: int) -> np.ndarray:
    """``log(theta(h) / (1 - theta(h)))`` from log-posteriors, last axis = hypotheses."""
    others = np.delete(log_theta, h, axis=-1)
    return log_theta[..., h] - logsumexp(others, axis=-1)


def _normalize_log(x: np.ndarray) -> np.ndarray:
    return x - logsumexp(x, axis=-1, keepdims=True)


def _safe_log(x) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(x, dtype=float))


def _sample(cdf_source: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF draws: row ``b`` of ``cdf_source`` is a distribution, ``u[b]`` a uniform."""
    cdf = np.cumsum(cdf_source, axis=-1)
    cdf /= cdf[:, -1:]
    return np.minimum((cdf < u[:, None]).sum(axis=1), cdf_source.shape[1] - 1)


@dataclass
class BatchResult:
    """Final state of a batch of episodes (log-posteriors, shape ``(B, m)``)."""

    teacher_log: np.ndarray
    learner_log: np.ndarray
    data: np.ndarray
    stop_round: np.ndarray
    teacher_path: np.ndarray | None = None
    learner_path: np.ndarray | None = None


class _Agent:
    """One side's update rule, vectorized over episodes."""

    def __init__(self, M: np.ndarray, mode: Mode, cfg: SinkhornConfig):
        self.mode = mode
        self.cfg = cfg
        if mode is Mode.BI:
            self.M = normalize_columns(M)
        else:
            self.M = np.asarray(M, dtype=float)
        self.logM = np.log(self.M)
        self.n = self.M.shape[0]

    def factors(self, log_theta: np.ndarray):
        return scbi_factors(self.M, np.exp(log_theta), self.cfg)[:2]

    def teaching(self, log_theta: np.ndarray, h: int, factors=None) -> np.ndarray:
        if self.mode is Mode.BI:
            return np.broadcast_to(self.M[:, h], (log_theta.shape[0], self.n))
        a, beta = factors
        return a * self.M[:, h] * beta[:, h, None] / self.n

    def update(self, log_theta: np.ndarray, d: np.ndarray, factors=None) -> np.ndarray:
        if self.mode is Mode.BI:
            return _normalize_log(log_theta + self.logM[d])
        a, beta = factors
        rows = np.arange(d.size)
        return _normalize_log(np.log(a[rows, d])[:, None] + self.logM[d] + log_theta + np.log(beta))


def simulate(T, L, teacher_prior, learner_prior, h: int, mode: Mode | str, *,
             uniforms=None, data=None, stop_threshold: float | None = None,
             record: bool = False, cfg: SinkhornConfig = DEFAULT_CONFIG) -> BatchResult:
    """Run a batch of episodes in lock-step.

    Either ``uniforms`` (shape ``(B, rounds)``, one draw per round consumed by
    the teacher's inverse-CDF sampler) or forced ``data`` of the same shape
    must be given.  Priors may be a single vector or one row per episode.
    With ``stop_threshold`` an episode freezes at the first round where the
    teacher's own posterior on ``h`` reaches the threshold; its
    ``stop_round`` records that round (or ``rounds`` if it never stops).
    """
    mode = Mode(mode)
    drive = np.asarray(uniforms if data is None else data)
    if drive.ndim != 2:
        raise DimensionMismatch("uniforms/data must have shape (episodes, rounds)")
    B, rounds = drive.shape
    T = np.asarray(T, dtype=float)
    L = np.asarray(L, dtype=float)
    m = T.shape[1]
    tlog = _normalize_log(np.broadcast_to(_safe_log(teacher_prior), (B, m)).copy())
    llog = _normalize_log(np.broadcast_to(_safe_log(learner_prior), (B, m)).copy())
    shared = T is L or (np.array_equal(T, L) and np.array_equal(tlog, llog))
    teacher = _Agent(T, mode, cfg)
    learner = teacher if shared else _Agent(L, mode, cfg)

    taught = np.full((B, rounds), -1, dtype=int)
    stop_round = np.full(B, rounds, dtype=int)
    active = np.ones(B, dtype=bool)
    log_stop = np.log(stop_threshold) if stop_threshold is not None else None
    if log_stop is not None:
        done = tlog[:, h] >= log_stop
        stop_round[done] = 0
        active &= ~done
    if record:
        tpath = np.empty((B, rounds + 1, m))
        lpath = np.empty((B, rounds + 1, m))
        tpath[:, 0], lpath[:, 0] = tlog, llog

    for k in range(rounds):
        if not record and not active.any():
            break
        idx = np.flatnonzero(active)
        if idx.size:
            tl = tlog[idx]
            tf = teacher.factors(tl) if mode is Mode.SCBI else None
            if data is None:
                d = _sample(teacher.teaching(tl, h, tf), drive[idx, k])
            else:
                d = drive[idx, k].astype(int)
            taught[idx, k] = d
            tlog[idx] = teacher.update(tl, d, tf)
            if shared:
                llog[idx] = tlog[idx]
            else:
                ll = llog[idx]
                lf = learner.factors(ll) if mode is Mode.SCBI else None
                llog[idx] = learner.update(ll, d, lf)
            if log_stop is not None:
                hit = idx[tlog[idx, h] >= log_stop]
                stop_round[hit] = k + 1
                active[hit] = False
        if record:
            tpath[:, k + 1], lpath[:, k + 1] = tlog, llog
    return BatchResult(tlog, llog, taught, stop_round,
                       tpath if record else None, lpath if record else None)


def run_episode(cfg: EpisodeConfig, rng: np.random.Generator | None = None, data=None,
                sinkhorn: SinkhornConfig = DEFAULT_CONFIG) -> EpisodeTrace:
    """Simulate one episode; pass ``data`` to force the taught sequence."""
    if data is not None:
        drive = dict(data=np.asarray(data, dtype=int)[None, :])
    else:
        rng = np.random.default_rng(cfg.seed) if rng is None else rng
        drive = dict(uniforms=rng.random(cfg.rounds)[None, :])
    res = simulate(cfg.teacher_matrix, cfg.learner_matrix, cfg.teacher_prior, cfg.learner_prior,
                   cfg.true_hypothesis, cfg.mode, record=True, cfg=sinkhorn, **drive)
    h = cfg.true_hypothesis
    tpath, lpath = res.teacher_path[0], res.learner_path[0]
    return EpisodeTrace(
        data=res.data[0],
        teacher_posteriors=np.exp(tpath),
        learner_posteriors=np.exp(lpath),
        teacher_log_odds=log_odds(tpath, h),
        learner_log_odds=log_odds(lpath, h),
        seed=cfg.seed,
    )


# -- rates of convergence ---------------------------------------------------

def _pairwise_kl(C: np.ndarray) -> np.ndarray:
    """``K[..., h, g] = KL(C[..., :, h] || C[..., :, g])`` for column-stochastic ``C``."""
    logC = np.log(C)
    plogp = np.einsum("...ih,...ih->...h", C, logC)
    cross = np.einsum("...ih,...ig->...hg", C, logC)
    return np.maximum(plogp[..., :, None] - cross, 0.0)


def _min_off_diagonal(K: np.ndarray):
    m = K.shape[-1]
    K = K.copy()
    K[..., np.arange(m), np.arange(m)] = np.inf
    return K.min(axis=-1), K.argmin(axis=-1)


def roc_bi(M, h: int) -> tuple[float, int]:
    """Asymptotic BI rate ``min_{g != h} KL(M[:, h] || M[:, g])`` and its argmin."""
    M = np.asarray(M, dtype=float)
    if M.shape[1] < 2:
        raise InvalidMatrix("need at least two hypotheses")
    h = _check_index(h, M.shape[1], "hypothesis")
    C = normalize_columns(M)
    rates = [kl_divergence(C[:, h], C[:, g]) if g != h else np.inf for g in range(M.shape[1])]
    g = int(np.argmin(rates))
    return float(rates[g]), g


def sharp_matrix(M, h: int) -> np.ndarray:
    """Column normalization of ``diag(M[:, h])^-1 M``; column ``h`` becomes uniform."""
    M = np.asarray(M, dtype=float)
    return normalize_columns(M / M[:, h:h + 1])


def roc_scbi(M, h: int) -> tuple[float, int, np.ndarray]:
    """Asymptotic SCBI rate from the sharp matrix, with its argmin and the matrix."""
    M = np.asarray(M, dtype=float)
    if M.shape[1] < 2:
        raise InvalidMatrix("need at least two hypotheses")
    h = _check_index(h, M.shape[1], "hypothesis")
    S = sharp_matrix(M, h)
    rates = [kl_divergence(S[:, h], S[:, g]) if g != h else np.inf for g in range(M.shape[1])]
    g = int(np.argmin(rates))
    return float(rates[g]), g, S


def normalized_kl(target_column, other_column) -> float:
    """``KL(e/n || N(other / target))``, the quantity minimized by the SCBI rate."""
    t = np.asarray(target_column, dtype=float)
    o = np.asarray(other_column, dtype=float)
    n = t.size
    return kl_divergence(np.full(n, 1.0 / n), normalize_vector(o / t))


def roc_bi_batch(Ms: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """BI rates for every hypothesis of every matrix in ``(N, n, m)``: ``(N, m)`` each."""
    C = Ms / Ms.sum(axis=-2, keepdims=True)
    return _min_off_diagonal(_pairwise_kl(C))


def roc_scbi_batch(Ms: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """SCBI rates for every hypothesis of every matrix in ``(N, n, m)``.

    Uses ``KL(e/n || q) = -ln n - mean(ln q)`` with ``q = N(M[:, g] / M[:, h])``.
    """
    logM = np.log(Ms)
    n = Ms.shape[-2]
    # R[..., i, h, g] = log M[i, g] - log M[i, h]
    R = logM[..., :, None, :] - logM[..., :, :, None]
    K = -np.log(n) - R.mean(axis=-3) + logsumexp(R, axis=-3)
    return _min_off_diagonal(np.maximum(K, 0.0))


@dataclass
class RocReport:
    per_hypothesis_bi: np.ndarray
    per_hypothesis_scbi: np.ndarray
    relevant_column_bi: np.ndarray
    relevant_column: np.ndarray


def roc_report(M) -> RocReport:
    M = as_positive_matrix(M)
    m = M.shape[1]
    bi = [roc_bi(M, h) for h in range(m)]
    sc = [roc_scbi(M, h) for h in range(m)]
    return RocReport(
        per_hypothesis_bi=np.array([r for r, _ in bi]),
        per_hypothesis_scbi=np.array([r for r, _, _ in sc]),
        relevant_column_bi=np.array([g for _, g in bi]),
        relevant_column=np.array([g for _, g, _ in sc]),
    )


class LogOddsFit(NamedTuple):
    endpoint: float
    slope: float
    saturated: bool


def log_odds_rate(log_odds_trace, burn_in: int = 0) -> tuple[float, float]:
    """Endpoint ``(1/k) log-odds_k`` at the final ``k`` and the least-squares slope after burn-in."""
    y = np.asarray(log_odds_trace, dtype=float)
    if y.size <= max(burn_in, 1):
        raise ValueError("trace must be longer than the burn-in")
    k = y.size - 1
    ks = np.arange(burn_in, y.size)
    slope = float(np.polyfit(ks, y[burn_in:], 1)[0]) if ks.size > 1 else float("nan")
    return float(y[-1] / k), slope


def fit_log_odds_slope(theta_h, burn_in: int = 0) -> LogOddsFit:
    """RoC estimate from a trace of ``theta_k(h)``, ``k = 0, 1, ...``.

    Probabilities are clamped to ``[1e-300, 1 - 1e-15]`` before taking logs;
    ``saturated`` reports whether the clamp was hit.
    """
    p = np.asarray(theta_h, dtype=float)
    if np.any((p < 0) | (p > 1)):
        raise ValueError("trace values must lie in [0, 1]")
    lo, hi = 1e-300, 1.0 - 1e-15
    saturated = bool(np.any((p < lo) | (p > hi)))
    p = np.clip(p, lo, hi)
    endpoint, slope = log_odds_rate(np.log(p) - np.log1p(-p), burn_in)
    return LogOddsFit(endpoint, slope, saturated)
