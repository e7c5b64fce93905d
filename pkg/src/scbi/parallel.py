"""Deterministic seeding and an order-preserving worker pool.

Every task draws from a generator derived from ``(base_seed, task_id)`` and
results come back in task order, so output never depends on the number of
workers.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np


def derive_rng(base_seed: int, task_id: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(base_seed), int(task_id)]))


def default_threads() -> int:
    return os.cpu_count() or 1


def ordered_map(fn, tasks, threads: int | None = None) -> list:
    tasks = list(tasks)
    threads = default_threads() if threads is None else max(1, int(threads))
    if threads == 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, tasks))
