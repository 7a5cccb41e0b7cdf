"""Small shared helpers."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor


def resolve_workers(workers: int | None) -> int:
    if workers is None:
        return os.cpu_count() or 1
    return max(1, int(workers))


def pmap(fn, items: list, workers: int | None = 1) -> list:
    """Map preserving input order; results are identical for any worker count."""
    workers = resolve_workers(workers)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(fn, items))
