"""Deterministic chunked parallelism.

Work is split into an ordered list of independent chunks; chunk results are
merged in list order no matter which thread finished first, so the parallel
and sequential modes produce bit-identical output.  Thread count resolution:
explicit argument > SKEWTHERM_THREADS > 1.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")

_ENV_VAR = "SKEWTHERM_THREADS"


def resolve_threads(threads: int | None = None) -> int:
    """Resolve the worker count.

    An explicit argument wins (0 means all cores); otherwise the env var is
    consulted (0 means all cores there too); the default is sequential.
    """
    if threads is not None:
        if threads > 0:
            return threads
        if threads == 0:
            return os.cpu_count() or 1
    env = os.environ.get(_ENV_VAR)
    if env:
        try:
            value = int(env)
            if value > 0:
                return value
            if value == 0:
                return os.cpu_count() or 1
        except ValueError:
            pass
    return 1


def ordered_map(fn: Callable[[T], R], items: Sequence[T], threads: int | None = None) -> List[R]:
    """Apply fn to each item, preserving input order in the result list."""
    n = resolve_threads(threads)
    if n <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(n, len(items))) as pool:
        return list(pool.map(fn, items))


def chunked(seq: Sequence[T], chunks: int) -> List[Sequence[T]]:
    chunks = max(1, min(chunks, len(seq)))
    size, extra = divmod(len(seq), chunks)
    out: List[Sequence[T]] = []
    start = 0
    for i in range(chunks):
        stop = start + size + (1 if i < extra else 0)
        out.append(seq[start:stop])
        start = stop
    return out
