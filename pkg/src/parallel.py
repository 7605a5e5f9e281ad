# src/parallel.py
from __future__ import annotations

import os
import logging
from typing import Callable, List, Optional, Tuple, TypeVar

from joblib import Parallel, delayed

log = logging.getLogger(__name__)

T = TypeVar("T")


def worker_count(requested: Optional[int] = None) -> int:
    """Workers to use: explicit request, else DCN_THREADS, else cpu count; never above cpu count."""
    cpus = os.cpu_count() or 1
    if requested is None:
        env = os.getenv("DCN_THREADS", "").strip()
        requested = int(env) if env else cpus
    return max(1, min(int(requested), cpus))


def split_range(total: int, parts: int) -> List[Tuple[int, int]]:
    parts = max(1, min(parts, total))
    step, extra = divmod(total, parts)
    out, start = [], 0
    for i in range(parts):
        stop = start + step + (1 if i < extra else 0)
        out.append((start, stop))
        start = stop
    return out


def map_chunks(fn: Callable[[int, int], T], total: int, workers: Optional[int] = None) -> List[T]:
    """
    Run fn(start, stop) over contiguous chunks of range(total).
    Results come back in chunk order whatever the worker count.
    """
    n = worker_count(workers)
    chunks = split_range(total, n)
    if len(chunks) <= 1:
        return [fn(a, b) for a, b in chunks]
    log.debug("map_chunks total=%d workers=%d chunks=%d", total, n, len(chunks))
    return Parallel(n_jobs=n, prefer="threads")(delayed(fn)(a, b) for a, b in chunks)
