"""Deterministic multiprocess helpers.

Work is split into blocks up front, independent of the worker count, and
results are merged in block order, so outputs are identical no matter how
many processes run. Heavy shared inputs travel to workers through a
module global captured at fork time instead of being pickled per task.
"""

from __future__ import annotations

import multiprocessing
import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

__all__ = ["parallel_map", "resolve_workers", "split_blocks"]

_SHARED = None


def resolve_workers(workers):
    """Normalize a worker count: None or 1 is serial, -1 is all cores."""
    if workers is None:
        return 1
    if not isinstance(workers, (int, np.integer)):
        raise TypeError(f"workers must be an int or None, got {type(workers).__name__}")
    if workers == -1:
        return os.cpu_count() or 1
    if workers < 1:
        raise ValueError(f"workers must be >= 1 or -1 for all cores, got {workers}")
    return int(workers)


def split_blocks(n_items, n_blocks):
    """Split range(n_items) into contiguous blocks of near-equal size.

    The decomposition depends only on the item count, never on the worker
    count, so parallel runs reproduce serial ones exactly.
    """
    n_blocks = max(1, min(n_blocks, n_items))
    bounds = np.linspace(0, n_items, n_blocks + 1).astype(int)
    return [range(bounds[b], bounds[b + 1]) for b in range(n_blocks)]


def parallel_map(fn, tasks, shared, workers):
    """Map ``fn(task)`` over tasks, preserving order.

    ``shared`` is made available to ``fn`` via ``get_shared()`` in every
    process. Serial when workers resolve to 1 or fork is unavailable.
    """
    global _SHARED
    tasks = list(tasks)
    workers = min(resolve_workers(workers), len(tasks)) if tasks else 1
    _SHARED = shared
    try:
        if workers <= 1:
            return [fn(t) for t in tasks]
        try:
            ctx = multiprocessing.get_context("fork")
        except ValueError:
            return [fn(t) for t in tasks]
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            return list(pool.map(fn, tasks))
    finally:
        _SHARED = None


def get_shared():
    """The ``shared`` object of the enclosing ``parallel_map`` call."""
    return _SHARED
