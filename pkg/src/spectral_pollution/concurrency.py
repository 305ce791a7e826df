"""Thread-count defaults shared by the parallel drivers."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

from .errors import ValidationError

THREADS_ENV = "POLLUTION_LAB_THREADS"


def default_threads() -> int:
    """Worker count from ``POLLUTION_LAB_THREADS``, else the CPU count."""
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            n = int(raw)
        except ValueError as exc:
            raise ValidationError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc
        if n < 1:
            raise ValidationError(f"{THREADS_ENV} must be positive")
        return n
    return os.cpu_count() or 1


def parallel_map(fn, items, threads: int | None = None) -> list:
    """Order-preserving map over a thread pool (serial for one worker)."""
    items = list(items)
    threads = default_threads() if threads is None else int(threads)
    if threads < 1:
        raise ValidationError("threads must be positive")
    if threads == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(fn, items))
