"""Grid-world teaching toy: two terminal goals in the top corners, three moves per cell.

Cells are ``(row, col)`` with row 0 at the top.  Goal A sits at the top-left
and goal B at the top-right corner; the teacher starts in the middle of the
bottom row.  The value of a cell for goal ``g`` is ``R * gamma^dist`` with
Manhattan distance ``dist``, so the likelihood of an action under ``g`` is
proportional to ``gamma`` raised to the distance after the move (``R``
cancels).  Teachable cells are the band below the top row, away from the
side walls, where left, up and right all make sense.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import normalize_columns
from .estimators import Mode, bi_teacher_distribution, bi_update, scbi_teacher_distribution, scbi_update
from .parallel import derive_rng

ACTIONS = ("left", "up", "right")
_MOVES = {"left": (0, -1), "up": (-1, 0), "right": (0, 1)}
HYPOTHESES = ("A", "B")


@dataclass(frozen=True)
class GridWorldConfig:
    width: int = 5
    height: int = 3
    gamma: float = 0.9
    reward: float = 1.0
    learner_gamma_offset: float = 0.0
    goal_a: tuple[int, int] | None = None
    goal_b: tuple[int, int] | None = None
    start: tuple[int, int] | None = None

    def __post_init__(self):
        if self.width < 3 or self.height < 2:
            raise ValueError("grid needs at least 3 columns and 2 rows")
        if not 0 < self.gamma < 1:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not 0 < self.gamma + self.learner_gamma_offset < 1:
            raise ValueError("learner gamma (gamma + offset) must lie in (0, 1)")
        if self.reward <= 0:
            raise ValueError("reward must be positive")
        if self.goal_a is None:
            object.__setattr__(self, "goal_a", (0, 0))
        if self.goal_b is None:
            object.__setattr__(self, "goal_b", (0, self.width - 1))
        if self.start is None:
            object.__setattr__(self, "start", (self.height - 1, self.width // 2))

    @property
    def goals(self) -> tuple[tuple[int, int], tuple[int, int]]:
        return self.goal_a, self.goal_b

    def in_band(self, cell) -> bool:
        r, c = cell
        return 1 <= r < self.height and 1 <= c < self.width - 1


def _manhattan(a, b) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


def move(cell, action: str):
    if action not in _MOVES:
        raise ValueError(f"invalid action {action!r}; expected one of {ACTIONS}")
    dr, dc = _MOVES[action]
    return cell[0] + dr, cell[1] + dc


@dataclass
class CellLikelihood:
    """Column-normalized ``3 x 2`` matrix, actions (left, up, right) by goals (A, B)."""

    cell: tuple[int, int]
    raw: np.ndarray
    matrix: np.ndarray


def build_cell_likelihood(cfg: GridWorldConfig, cell, gamma: float | None = None) -> CellLikelihood:
    """``gamma^(distance after the action)`` per action and goal, column-normalized."""
    cell = tuple(cell)
    if not cfg.in_band(cell):
        raise ValueError(f"cell {cell} is outside the teachable band")
    g = cfg.gamma if gamma is None else gamma
    raw = np.array([[g ** _manhattan(move(cell, a), goal) for goal in cfg.goals] for a in ACTIONS])
    return CellLikelihood(cell, raw, normalize_columns(raw))


def _step(mode: Mode, M: np.ndarray, theta, d: int) -> np.ndarray:
    return bi_update(M, theta, d) if mode is Mode.BI else scbi_update(M, theta, d)


def _teach(mode: Mode, M: np.ndarray, theta, h: int) -> np.ndarray:
    return bi_teacher_distribution(M, h) if mode is Mode.BI else scbi_teacher_distribution(M, theta, h)


def run_gridworld_comparison(cfg: GridWorldConfig, trajectory, modes=(Mode.BI, Mode.SCBI),
                             prior=(0.5, 0.5), h: int = 0) -> list[dict]:
    """Learner posteriors along a fixed action sequence, one row per round and mode.

    Round 0 is the prior.  Agents track the current cell and rebuild the
    likelihood there before every update.
    """
    modes = [Mode(m) for m in modes]
    actions = [ACTIONS.index(a) if isinstance(a, str) and a in ACTIONS else None for a in trajectory]
    if None in actions:
        bad = [a for a, i in zip(trajectory, actions) if i is None]
        raise ValueError(f"invalid action(s) {bad}; expected one of {ACTIONS}")
    rows = []
    for mode in modes:
        theta = np.asarray(prior, dtype=float)
        cell = cfg.start
        rows.append(dict(mode=mode.value, round=0, action="", row=cell[0], col=cell[1],
                         theta_A=theta[0], theta_B=theta[1], theta_true=theta[h]))
        for k, (name, d) in enumerate(zip(trajectory, actions), start=1):
            M = build_cell_likelihood(cfg, cell).matrix
            theta = _step(mode, M, theta, d)
            cell = move(cell, name)
            rows.append(dict(mode=mode.value, round=k, action=name, row=cell[0], col=cell[1],
                             theta_A=theta[0], theta_B=theta[1], theta_true=theta[h]))
    return rows


def gridworld_mismatch_experiment(cfg: GridWorldConfig, episodes: int, seed: int, rounds: int = 2,
                                  offset: float = 0.1, modes=(Mode.BI, Mode.SCBI), h: int = 0,
                                  prior=(0.5, 0.5)) -> list[dict]:
    """Mean ``|learner theta(h) - teacher theta(h)|`` per round when the learner's gamma is off.

    In each episode the learner's discount is ``gamma + offset`` or
    ``gamma - offset`` with equal probability; the teacher samples actions
    from its own (correct-gamma) teaching distribution.  Episode ``i`` draws
    from the stream ``(seed, i)``, shared across modes.
    """
    for s in (1, -1):
        if not 0 < cfg.gamma + s * offset < 1:
            raise ValueError(f"gamma {cfg.gamma} +/- {offset} leaves (0, 1)")
    modes = [Mode(m) for m in modes]
    draws = [derive_rng(seed, i) for i in range(episodes)]
    signs = np.array([1 if g.random() < 0.5 else -1 for g in draws])
    uniforms = np.array([g.random(rounds) for g in draws]).reshape(episodes, rounds)
    cache: dict = {}

    def matrix(cell, gamma):
        key = (cell, gamma)
        if key not in cache:
            cache[key] = build_cell_likelihood(cfg, cell, gamma).matrix
        return cache[key]

    rows = []
    for mode in modes:
        diffs = np.zeros((episodes, rounds + 1))
        for i in range(episodes):
            g_l = cfg.gamma + signs[i] * offset
            t = np.asarray(prior, dtype=float)
            l = t.copy()
            cell = cfg.start
            for k in range(rounds):
                if not cfg.in_band(cell):
                    diffs[i, k + 1:] = diffs[i, k]
                    break
                T = matrix(cell, cfg.gamma)
                p = _teach(mode, T, t, h)
                d = int(min(np.searchsorted(np.cumsum(p) / p.sum(), uniforms[i, k], side="left"), 2))
                t = _step(mode, T, t, d)
                l = _step(mode, matrix(cell, g_l), l, d)
                cell = move(cell, ACTIONS[d])
                diffs[i, k + 1] = abs(l[h] - t[h])
        mean = diffs.mean(axis=0)
        se = diffs.std(axis=0, ddof=1) / np.sqrt(episodes) if episodes > 1 else np.zeros(rounds + 1)
        for k in range(rounds + 1):
            rows.append(dict(mode=mode.value, round=k, mean_abs_difference=mean[k], std_error=se[k],
                             gamma=cfg.gamma, offset=offset, episodes=episodes, seed=seed))
    return rows
