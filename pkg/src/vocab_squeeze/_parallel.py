from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Optional, TypeVar

T = TypeVar("T")
R = TypeVar("R")

THREADS_ENV = "VOCAB_SQUEEZE_THREADS"


def max_workers(requested: Optional[int] = None) -> int:
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def ordered_map(fn: Callable[[T], R], items: Iterable[T], workers: Optional[int] = None) -> list[R]:
    """``[fn(x) for x in items]``, possibly on threads; output order always matches input."""
    items = list(items)
    w = min(max_workers(workers), len(items))
    if w <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=w) as pool:
        return list(pool.map(fn, items))
