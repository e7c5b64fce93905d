"""Batch experiment drivers: RoC comparison, short-run statistics, stability sweeps.

Drivers take an integer ``seed`` and derive one generator per task
(``parallel.derive_rng(seed, task_id)``); rows come back in task order, so
results are identical for any ``threads``.  Table drivers return lists of
flat dicts ready for :func:`scbi.io.write_csv`.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from itertools import combinations_with_replacement

import numpy as np
from scipy import optimize, stats
from scipy.special import gammaln

from .core import columns_distinguishable, normalize_columns, sample_column_stochastic, \
    sample_column_stochastic_batch, sample_simplex_uniform
from .errors import ScbiError
from .estimators import EpisodeConfig, Mode, log_odds, normalized_kl, roc_bi_batch, roc_scbi, \
    roc_scbi_batch, simulate
from .measure import component, exact_distribution, successful_rate, variance, expectation
from .parallel import derive_rng, ordered_map

log = logging.getLogger(__name__)

CHUNK = 10_000


# -- asymptotic RoC comparison ------------------------------------------------

@dataclass
class RocComparisonResult:
    """Monte Carlo estimates of P(mean SCBI rate >= mean BI rate) and of the mean gap.

    ``p_hat``/``e_hat`` average the rates over hypotheses before comparing;
    the ``*_fixed_h`` fields compare the rates of hypothesis 0 only.
    """

    n: int
    m: int
    samples: int
    p_hat: float
    e_hat: float
    p_std_error: float
    e_std_error: float
    p_hat_fixed_h: float
    e_hat_fixed_h: float
    e_std_error_fixed_h: float
    seed: int

    @property
    def neg_log_one_minus_p(self) -> float:
        """``-ln(1 - p_hat)``; ``inf`` when every sample favoured SCBI."""
        return math.inf if self.p_hat >= 1.0 else -math.log1p(-self.p_hat)

    def as_row(self) -> dict:
        row = asdict(self)
        row["neg_log_one_minus_p"] = self.neg_log_one_minus_p
        row["p_saturated"] = self.p_hat >= 1.0
        return row


def _roc_chunk(args):
    n, m, size, seed, task = args
    Ms = sample_column_stochastic_batch(n, m, size, derive_rng(seed, task))
    bi, _ = roc_bi_batch(Ms)
    sc, _ = roc_scbi_batch(Ms)
    diff = sc.mean(axis=1) - bi.mean(axis=1)
    diff_h = sc[:, 0] - bi[:, 0]
    return (int(np.sum(diff >= 0)), float(diff.sum()), float(np.sum(diff ** 2)),
            int(np.sum(diff_h >= 0)), float(diff_h.sum()), float(np.sum(diff_h ** 2)))


def roc_comparison(n: int, m: int, samples: int, seed: int, threads: int | None = None,
                   chunk: int = CHUNK) -> RocComparisonResult:
    """Sample column-stochastic ``n x m`` matrices and compare average SCBI and BI rates."""
    if not n >= m >= 2:
        raise ValueError(f"need n >= m >= 2, got {n}x{m}")
    tasks = [(n, m, min(chunk, samples - s), seed, i) for i, s in enumerate(range(0, samples, chunk))]
    parts = np.array(ordered_map(_roc_chunk, tasks, threads), dtype=float)
    tot = parts.sum(axis=0)
    N = samples
    p = tot[0] / N
    e = tot[1] / N
    e_var = max(tot[2] / N - e * e, 0.0) * N / max(N - 1, 1)
    ph = tot[3] / N
    eh = tot[4] / N
    eh_var = max(tot[5] / N - eh * eh, 0.0) * N / max(N - 1, 1)
    return RocComparisonResult(
        n=n, m=m, samples=N, p_hat=p, e_hat=e,
        p_std_error=math.sqrt(p * (1 - p) / N), e_std_error=math.sqrt(e_var / N),
        p_hat_fixed_h=ph, e_hat_fixed_h=eh, e_std_error_fixed_h=math.sqrt(eh_var / N),
        seed=seed,
    )


@dataclass
class ClosedFormEstimate:
    value: float
    std_error: float
    integral: float
    samples: int


def _log_ratio_sum_chunk(args):
    n, size, seed, task = args
    rng = derive_rng(seed, task)
    x = sample_simplex_uniform(n, rng, size)
    y = sample_simplex_uniform(n, rng, size)
    f = np.log(np.sum(x / y, axis=1))
    return float(f.sum()), float(np.sum(f ** 2))


def e_closed_form_two_column(n: int, samples: int, seed: int, threads: int | None = None,
                             chunk: int = CHUNK) -> ClosedFormEstimate:
    """Expected mean-rate gap for ``n x 2`` matrices via the one-integral reduction.

    ``E = int ln(sum_i x_i / y_i) dx dy - ln n - (n - 1)/n`` over independent
    uniform ``x, y`` on the simplex; only the integral is estimated by Monte
    Carlo, the other two terms are exact.
    """
    if n < 2:
        raise ValueError("need n >= 2")
    tasks = [(n, min(chunk, samples - s), seed, i) for i, s in enumerate(range(0, samples, chunk))]
    parts = np.array(ordered_map(_log_ratio_sum_chunk, tasks, threads))
    s, s2 = parts.sum(axis=0)
    mean = s / samples
    var = max(s2 / samples - mean * mean, 0.0) * samples / max(samples - 1, 1)
    se = math.sqrt(var / samples)
    return ClosedFormEstimate(mean - math.log(n) - (n - 1) / n, se, mean, samples)


def bi_average_rate_monte_carlo(n: int, samples: int, seed: int) -> tuple[float, float]:
    """Monte Carlo mean of the hypothesis-averaged BI rate for ``n x 2`` matrices.

    The exact value is ``(n - 1)/n``; returns ``(estimate, std_error)``.
    """
    rng = derive_rng(seed, 0)
    x = sample_simplex_uniform(n, rng, samples)
    y = sample_simplex_uniform(n, rng, samples)
    v = 0.5 * np.sum((x - y) * (np.log(x) - np.log(y)), axis=1)
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(samples))


# -- short-run distribution statistics -----------------------------------------

def bi_exact_stats(M, h: int, theta0, k: int) -> tuple[float, float]:
    """Mean and standard deviation of ``theta_k(h)`` under BI, by enumerating data counts.

    BI posteriors only depend on how often each datum occurred, so the ``n^k``
    paths collapse to multisets weighted by the multinomial probability.
    """
    C = normalize_columns(M)
    n = C.shape[0]
    logC = np.log(C)
    combos = np.array(list(combinations_with_replacement(range(n), k)), dtype=int).reshape(-1, k)
    counts = np.zeros((combos.shape[0], n))
    for j in range(k):
        np.add.at(counts, (np.arange(combos.shape[0]), combos[:, j]), 1)
    logw = gammaln(k + 1) - gammaln(counts + 1).sum(axis=1) + counts @ logC[:, h]
    w = np.exp(logw)
    logpost = counts @ logC + np.log(theta0)
    post = np.exp(log_odds(logpost, h))
    post = post / (1 + post)
    mean = float(np.dot(w, post))
    return mean, float(np.sqrt(max(np.dot(w, (post - mean) ** 2), 0.0)))


def _short_run_task(args):
    n, m, exact_rounds, mc_rounds, mc_episodes, seed, h, i = args
    rng = derive_rng(seed, i)
    M = sample_column_stochastic(n, m, rng)
    theta0 = np.full(m, 1.0 / m)
    row = dict(matrix_id=i, seed=seed, n=n, m=m, h=h, exact_rounds=exact_rounds)
    row["bi_exact_mean"], row["bi_exact_sd"] = bi_exact_stats(M, h, theta0, exact_rounds)
    mu = exact_distribution(M, h, theta0, exact_rounds)
    row["scbi_exact_mean"] = expectation(mu, component(h))
    row["scbi_exact_sd"] = math.sqrt(variance(mu, component(h)))
    row["mc_rounds"] = mc_rounds
    row["mc_episodes"] = mc_episodes
    if mc_rounds > 0 and mc_episodes > 0:
        u = rng.random((mc_episodes, mc_rounds))
        for mode in (Mode.BI, Mode.SCBI):
            res = simulate(M, M, theta0, theta0, h, mode, uniforms=u)
            x = np.exp(res.learner_log[:, h])
            row[f"{mode.value}_mc_mean"] = float(x.mean())
            row[f"{mode.value}_mc_sd"] = float(x.std(ddof=1)) if x.size > 1 else 0.0
    return row


SHORT_RUN_COLUMNS = ["matrix_id", "seed", "n", "m", "h", "exact_rounds", "bi_exact_mean", "bi_exact_sd",
                     "scbi_exact_mean", "scbi_exact_sd", "mc_rounds", "mc_episodes", "bi_mc_mean",
                     "bi_mc_sd", "scbi_mc_mean", "scbi_mc_sd"]


def short_run_stats(n: int, m: int, n_matrices: int, exact_rounds: int, mc_rounds: int,
                    mc_episodes: int, seed: int, h: int = 0, threads: int | None = None) -> list[dict]:
    """Per-matrix expectation and spread of ``theta(h)`` after a few rounds, BI vs SCBI.

    Exact values at ``exact_rounds`` (full enumeration) and Monte Carlo values
    at ``mc_rounds``; one row per sampled matrix.
    """
    tasks = [(n, m, exact_rounds, mc_rounds, mc_episodes, seed, h, i) for i in range(n_matrices)]
    return ordered_map(_short_run_task, tasks, threads)


def short_run_summary(rows: list[dict]) -> dict:
    out = {"matrices": len(rows)}
    for key in ("exact", "mc"):
        pairs = [(r[f"scbi_{key}_mean"], r[f"bi_{key}_mean"]) for r in rows if f"scbi_{key}_mean" in r]
        if pairs:
            out[f"frac_scbi_mean_higher_{key}"] = float(np.mean([s > b for s, b in pairs]))
    return out


# -- geometry helpers ------------------------------------------------------------

def simplex_plane_basis(dim: int, toward: int | None = 0) -> np.ndarray:
    """Orthonormal basis (rows) of the sum-zero hyperplane of R^dim.

    With ``toward`` the first vector points from the barycentre to that vertex.
    """
    center = np.full(dim, 1.0 / dim)
    first = np.eye(dim)[toward if toward is not None else 0] - center
    A = np.column_stack([first, np.eye(dim)[:, :dim - 1] - center[:, None]])
    Q, _ = np.linalg.qr(np.column_stack([np.ones(dim), A]))
    B = Q[:, 1:dim].T
    if np.dot(B[0], first) < 0:
        B[0] = -B[0]
    return B


def _inside(p) -> bool:
    return bool(np.all(p > 0))


# -- stability: perturbed learner prior -----------------------------------------

def prior_perturbation_points(theta_T, h: int, scheme: str, params: dict | None, seed: int):
    """Perturbed learner priors as ``(direction, radius, point)`` triples.

    ``rays``: 6 rays 60 degrees apart for three hypotheses (ray 0 points at
    vertex ``h``), otherwise ``n_directions`` random directions; ``circles``:
    layer ``i`` carries ``6 i`` evenly spaced points; ``uniform``: uniform draws
    on the whole simplex.  Points outside the open simplex are dropped.
    """
    params = dict(params or {})
    theta_T = np.asarray(theta_T, dtype=float)
    m = theta_T.size
    out = []
    if scheme == "rays":
        if m == 3:
            radii = params.get("radii", np.linspace(0.005, 0.07, 14))
            B = simplex_plane_basis(3, h)
            n_dir = int(params.get("n_directions", 6))
            angles = 2 * np.pi * np.arange(n_dir) / n_dir
            dirs = np.cos(angles)[:, None] * B[0] + np.sin(angles)[:, None] * B[1]
        else:
            radii = params.get("radii", np.linspace(0.005, 0.1, 20))
            n_dir = int(params.get("n_directions", 15))
            B = simplex_plane_basis(m, h)
            z = derive_rng(seed, 1_000_003).standard_normal((n_dir, m - 1))
            dirs = (z / np.linalg.norm(z, axis=1, keepdims=True)) @ B
        for j, u in enumerate(dirs):
            for r in radii:
                out.append((j, float(r), theta_T + r * u))
    elif scheme == "circles":
        if m != 3:
            raise ValueError("the circles scheme needs three hypotheses")
        layers = int(params.get("layers", 14))
        step = float(params.get("radius_step", 0.005))
        B = simplex_plane_basis(3, h)
        for i in range(1, layers + 1):
            for j in range(6 * i):
                ang = 2 * np.pi * j / (6 * i)
                direction = j // i if j % i == 0 else -1
                out.append((direction, i * step, theta_T + i * step * (np.cos(ang) * B[0] + np.sin(ang) * B[1])))
    elif scheme == "uniform":
        count = int(params.get("count", 300))
        pts = sample_simplex_uniform(m, derive_rng(seed, 1_000_004), count)
        for p in pts:
            out.append((-1, float(np.linalg.norm(p - theta_T)), p))
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    kept = []
    for d, r, p in out:
        if _inside(p):
            kept.append((d, r, p / p.sum()))
        else:
            log.info("skipping prior outside the simplex: %s", np.round(p, 6))
    return kept, len(out) - len(kept)


def _prior_task(args):
    M, theta_T, theta_L, h, episodes, seed, k_max, stop = args
    cfg = EpisodeConfig(M, M, theta_T, theta_L, true_hypothesis=h, mode=Mode.SCBI, seed=seed)
    return successful_rate(cfg, episodes, stop_threshold=stop, k_max=k_max)


def prior_perturbation_sweep(M, theta_T, h: int = 0, scheme: str = "rays", params: dict | None = None,
                             episodes: int = 1000, seed: int = 0, threads: int | None = None,
                             fixture_id: str = "custom", k_max: int = 3000,
                             stop_threshold: float = 1 - 1e-6) -> list[dict]:
    """Successful rate at perturbed learner priors around the teacher's prior.

    All points share the episode seeds, so the teacher's data streams are the
    same at every point and differences come from the learner prior alone.
    """
    M = normalize_columns(M)
    theta_T = np.asarray(theta_T, dtype=float)
    pts, skipped = prior_perturbation_points(theta_T, h, scheme, params, seed)
    if skipped:
        log.warning("%d perturbed priors fell outside the simplex and were skipped", skipped)
    tasks = [(M, theta_T, p, h, episodes, seed, k_max, stop_threshold) for _, _, p in pts]
    results = ordered_map(_prior_task, tasks, threads)
    rows = []
    for i, ((direction, radius, p), est) in enumerate(zip(pts, results)):
        dist = float(np.linalg.norm(p - theta_T))
        bound = 1.0 - dist / theta_T[h]
        row = dict(point_id=i, fixture=fixture_id, scheme=scheme, h=h, direction=direction, radius=radius)
        row.update({f"theta_L_{j + 1}": float(v) for j, v in enumerate(p)})
        row.update(distance=dist, l1_distance=float(np.abs(p - theta_T).sum()), rate=est.value,
                   std_error=est.std_error, linear_bound=bound, bound_violated=est.value < bound,
                   capped=est.capped, episodes=episodes, seed=seed)
        rows.append(row)
    return rows


def ray_linearity(rows: list[dict]) -> list[dict]:
    """Least-squares fit of rate against distance along each ray."""
    out = []
    for d in sorted({r["direction"] for r in rows if r["direction"] >= 0}):
        pts = [(r["distance"], r["rate"]) for r in rows if r["direction"] == d]
        if len(pts) < 3:
            continue
        x, y = np.array(pts).T
        fit = stats.linregress(x, y)
        out.append(dict(direction=d, points=len(pts), slope=fit.slope, intercept=fit.intercept,
                        r_squared=fit.rvalue ** 2 if np.ptp(y) > 0 else 1.0))
    return out


# -- stability: perturbed learner matrix ------------------------------------------

def column_roles(T, h: int = 0) -> dict[str, int]:
    """Target (taught), relevant (SCBI-rate argmin) and irrelevant column indices."""
    _, rel, _ = roc_scbi(T, h)
    rest = [j for j in range(np.shape(T)[1]) if j not in (h, rel)]
    roles = {"target": h, "relevant": rel}
    if rest:
        roles["irrelevant"] = rest[0]
    return roles


def matrix_perturbation_columns(T, h: int, column: int, scheme: str, params: dict | None):
    """Perturbed versions of column ``column`` as ``(angle, radius_or_weight, column_vector)``."""
    params = dict(params or {})
    T = normalize_columns(T)
    n = T.shape[0]
    base = T[:, column]
    target = T[:, h]
    B = simplex_plane_basis(n, None)[:2]
    out = []
    if scheme == "disc":
        layers = int(params.get("layers", 10))
        step = float(params.get("radius_step", 0.005))
        out.append((0.0, 0.0, base.copy()))
        for i in range(1, layers + 1):
            for j in range(6 * i):
                ang = 2 * np.pi * j / (6 * i)
                out.append((float(ang), i * step, base + i * step * (np.cos(ang) * B[0] + np.sin(ang) * B[1])))
    elif scheme == "equi_kl":
        count = int(params.get("count", 90))
        level = normalized_kl(target, base)
        for j in range(count):
            ang = 2 * np.pi * j / count
            u = np.cos(ang) * B[0] + np.sin(ang) * B[1]
            neg = u < 0
            t_max = float(np.min(-target[neg] / u[neg])) if neg.any() else 10.0
            hi = t_max * (1 - 1e-9)

            def gap(t):
                return normalized_kl(target, target + t * u) - level

            if gap(hi) < 0:
                log.info("no equi-KL point on ray at angle %.3f", ang)
                continue
            try:
                t = optimize.bisect(gap, 0.0, hi, xtol=1e-10)
            except (ValueError, RuntimeError) as exc:
                log.info("equi-KL root finding failed at angle %.3f: %s", ang, exc)
                continue
            out.append((float(ang), float(t), target + t * u))
    elif scheme == "interpolation":
        count = int(params.get("count", 50))
        for w in np.linspace(0.0, 1.0, count):
            out.append((0.0, float(w), (1 - w) * base + w * target))
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    return out


def _matrix_task(args):
    T, L, theta, h, episodes, seed, k_max, stop = args
    cfg = EpisodeConfig(T, L, theta, theta, true_hypothesis=h, mode=Mode.SCBI, seed=seed)
    return successful_rate(cfg, episodes, stop_threshold=stop, k_max=k_max)


def matrix_perturbation_sweep(T, theta, h: int = 0, column_role: str = "relevant", scheme: str = "disc",
                              params: dict | None = None, episodes: int = 1000, seed: int = 0,
                              threads: int | None = None, fixture_id: str = "custom",
                              k_max: int = 3000, stop_threshold: float = 1 - 1e-6) -> list[dict]:
    """Successful rate when one column of the learner's matrix is perturbed."""
    T = normalize_columns(T)
    roles = column_roles(T, h)
    if column_role not in roles or column_role == "target":
        raise ValueError(f"column role must be one of {sorted(set(roles) - {'target'})}")
    col = roles[column_role]
    candidates = matrix_perturbation_columns(T, h, col, scheme, params)
    kept = []
    for ang, r, c in candidates:
        L = T.copy()
        L[:, col] = c
        if not _inside(c) or not columns_distinguishable(L):
            log.info("skipping perturbation (angle %.3f, %.4g): leaves the simplex or repeats a column", ang, r)
            continue
        kept.append((ang, r, c / c.sum(), L))
    tasks = [(T, normalize_columns(L), theta, h, episodes, seed, k_max, stop_threshold) for *_, L in kept]
    results = ordered_map(_matrix_task, tasks, threads)
    rows = []
    for i, ((ang, r, c, _), est) in enumerate(zip(kept, results)):
        row = dict(point_id=i, fixture=fixture_id, scheme=scheme, column_role=column_role, column=col,
                   angle=ang, radius=r)
        row.update({f"entry_{j + 1}": float(v) for j, v in enumerate(c)})
        row.update(normalized_kl=normalized_kl(T[:, h], c), rate=est.value, std_error=est.std_error,
                   capped=est.capped, episodes=episodes, seed=seed)
        rows.append(row)
    return rows


def directional_gradients(rows: list[dict], tol: float = 1e-9) -> dict:
    """Radial slope of the rate along each direction present on every disc layer.

    Returns the smallest and largest absolute slopes with their angles; a big
    ratio between them is the slow/fast direction pattern of the disc plots.
    """
    center = [r for r in rows if r["radius"] == 0]
    base = center[0]["rate"] if center else None
    by_angle: dict[float, list] = {}
    for r in rows:
        if r["radius"] > 0:
            by_angle.setdefault(round(r["angle"], 9), []).append((r["radius"], r["rate"]))
    slopes = {}
    for ang, pts in by_angle.items():
        if base is not None:
            pts = [(0.0, base)] + pts
        if len(pts) >= 3:
            x, y = np.array(pts).T
            slopes[ang] = float(np.polyfit(x, y, 1)[0])
    if not slopes:
        return {}
    lo = min(slopes, key=lambda a: abs(slopes[a]))
    hi = max(slopes, key=lambda a: abs(slopes[a]))
    return dict(directions=len(slopes), min_abs_slope=abs(slopes[lo]), min_angle=lo,
                max_abs_slope=abs(slopes[hi]), max_angle=hi)
