"""Deterministic data-parallel execution over continuum levels.

Work is split into fixed-size chunks of grid levels. Chunk boundaries never
depend on the worker count, per-chunk math touches only that chunk's levels,
and cross-chunk sums are combined in a fixed pairwise tree, so every result
is bit-identical for 1 and N threads.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

from .errors import UsageError

# levels per work item; fixed so chunking is independent of the thread count
CHUNK = 256

THREADS_ENV = "ZENO_LAB_THREADS"


def resolve_threads(n_threads: int | None = None) -> int:
    """Explicit argument wins; otherwise ZENO_LAB_THREADS; otherwise 1."""
    if n_threads is None:
        raw = os.environ.get(THREADS_ENV, "")
        n_threads = int(raw) if raw.strip() else 1
    if n_threads < 1:
        raise UsageError("thread count must be at least 1")
    return n_threads


def chunk_slices(n: int, chunk: int = CHUNK) -> list[slice]:
    return [slice(lo, min(lo + chunk, n)) for lo in range(0, n, chunk)]


def map_chunks(fn, n: int, n_threads: int | None = None, chunk: int = CHUNK) -> list:
    """Apply fn to each level-slice, returning results in slice order."""
    slices = chunk_slices(n, chunk)
    workers = resolve_threads(n_threads)
    if workers <= 1 or len(slices) <= 1:
        return [fn(s) for s in slices]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, slices))


def tree_sum(parts):
    """Pairwise reduction of per-chunk partial sums in a fixed order."""
    items = list(parts)
    if not items:
        raise UsageError("tree_sum needs at least one term")
    while len(items) > 1:
        nxt = []
        for i in range(0, len(items) - 1, 2):
            nxt.append(items[i] + items[i + 1])
        if len(items) % 2:
            nxt.append(items[-1])
        items = nxt
    return items[0]
