"""Thread fan-out helper honoring the SELECTORKIT_THREADS cap.

Results are gathered in input order, so outputs are independent of the
scheduling and of the thread count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def max_threads() -> int:
    raw = os.environ.get("SELECTORKIT_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def ordered_map(fn: Callable[[T], R], items: Sequence[T]) -> list[R]:
    """Map preserving input order; parallel when the env cap allows."""
    n = max_threads()
    if n <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
