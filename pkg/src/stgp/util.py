"""Small shared helpers."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def thread_count() -> int:
    """Worker cap for parallel sections; the STGP_THREADS environment
    variable overrides the default of 1 (fully sequential)."""
    raw = os.environ.get("STGP_THREADS", "")
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(1, n)


def parallel_map(fn, items):
    """Order-preserving map, threaded only when STGP_THREADS asks for it."""
    workers = thread_count()
    items = list(items)
    if workers == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


def fmt17(x: float) -> str:
    """Float formatting with 17 significant digits (lossless round trip)."""
    return format(float(x), ".17g")
