"""Worker-count resolution and an order-preserving parallel map."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

from .errors import UsageError

THREADS_ENV = "LORLAB_THREADS"


def resolve_threads(threads=None) -> int:
    """Explicit value, else ``$LORLAB_THREADS``, else 1."""
    if threads is None:
        raw = os.environ.get(THREADS_ENV, "").strip()
        if not raw:
            return 1
        try:
            threads = int(raw)
        except ValueError as exc:
            raise UsageError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc
    threads = int(threads)
    if threads < 1:
        raise UsageError(f"thread count must be >= 1, got {threads}")
    return threads


def pmap(fn, items, threads=None) -> list:
    """``[fn(x) for x in items]`` with results in input order.

    Every item is computed independently, so the output does not depend on
    the number of workers or their schedule.
    """
    items = list(items)
    workers = resolve_threads(threads)
    if workers == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
