"""Order-preserving process pool used by sweeps and Monte Carlo runs."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Optional, Sequence, TypeVar

from .errors import DomainError

T = TypeVar("T")
R = TypeVar("R")

THREADS_ENV = "RRDPS_THREADS"


def default_workers() -> int:
    """Worker count from ``RRDPS_THREADS`` (1 when unset)."""
    env = os.environ.get(THREADS_ENV)
    if not env:
        return 1
    try:
        n = int(env)
    except ValueError:
        raise DomainError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    if n < 1:
        raise DomainError(f"{THREADS_ENV} must be >= 1, got {n}")
    return n


def ordered_map(fn: Callable[[T], R], jobs: Sequence[T], workers: Optional[int] = None) -> list[R]:
    """``[fn(j) for j in jobs]``, possibly across processes, in input order.

    ``workers`` is capped by ``RRDPS_THREADS`` when that variable is set.
    """
    cap = default_workers()
    if workers is None:
        workers = cap
    elif os.environ.get(THREADS_ENV):
        workers = min(workers, cap)
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(fn, jobs))
