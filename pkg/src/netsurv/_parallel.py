"""Deterministic chunked execution.

Patients are cut into fixed-size chunks whose boundaries do not depend on the
thread count. Each chunk fills its own compensated accumulators; the partial
results are then folded in chunk order. So the thread count changes only the
scheduling, never the floating-point result.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

import numpy as np

CHUNK_SIZE = 512

_default_threads: int | None = None


def set_num_threads(n: int | None) -> None:
    """Set the default worker count (``None`` = available cores)."""
    global _default_threads
    if n is not None and n < 1:
        raise ValueError("thread count must be >= 1")
    _default_threads = n


def get_num_threads() -> int:
    return _default_threads or os.cpu_count() or 1


def chunks(n: int, size: int = CHUNK_SIZE) -> list[slice]:
    return [slice(lo, min(lo + size, n)) for lo in range(0, n, size)]


def run_chunks(fn: Callable[[slice], object], n: int, threads: int | None = None) -> list:
    parts = chunks(n)
    threads = threads or get_num_threads()
    if threads == 1 or len(parts) <= 1:
        return [fn(p) for p in parts]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, parts))


def kahan_fold(parts: Sequence[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    """Sum per-chunk (sum, compensation) pairs elementwise, in order."""
    acc = np.zeros_like(parts[0][0])
    comp = np.zeros_like(acc)
    for s, c in parts:
        for x in (s, -c):
            y = x - comp
            t = acc + y
            comp = (t - acc) - y
            acc = t
    return acc - comp
