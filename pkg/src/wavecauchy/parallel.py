"""Ordered parallel map used by the grid and trace routines."""
import os
from concurrent.futures import ThreadPoolExecutor

THREADS_ENV = "WAVECAUCHY_THREADS"


def resolve_threads(threads=None):
    """Worker count: explicit argument, then the environment, then cpu count."""
    if threads is None:
        env = os.environ.get(THREADS_ENV, "").strip()
        if env:
            try:
                threads = int(env)
            except ValueError:
                raise ValueError(f"{THREADS_ENV} must be an integer, got {env!r}")
        else:
            threads = os.cpu_count() or 1
    threads = int(threads)
    if threads < 1:
        raise ValueError("thread count must be >= 1")
    return threads


def parallel_map(fn, items, threads=None):
    """``[fn(x) for x in items]`` on a thread pool; output order follows input."""
    items = list(items)
    n = min(resolve_threads(threads), max(len(items), 1))
    if n == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
