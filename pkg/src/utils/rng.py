from concurrent.futures import ThreadPoolExecutor
from typing import Callable, TypeVar

import numpy as np

from config.settings import WORKERS

T = TypeVar("T")


def stream(seed: int, index: int) -> np.random.Generator:
    """Independent generator for work item `index` under a master `seed`."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def run_indexed(
    task: Callable[[int, np.random.Generator], T],
    count: int,
    seed: int,
    workers: int | None = None,
) -> list[T]:
    """
    Run `task(index, rng)` for index in range(count), each with its own stream.

    Results come back in index order, so the outcome does not depend on the
    number of workers.
    """
    workers = workers or WORKERS

    def _call(index: int) -> T:
        return task(index, stream(seed, index))

    if workers <= 1 or count <= 1:
        return [_call(i) for i in range(count)]

    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_call, range(count)))


def chunk_sizes(total: int, chunk: int) -> list[int]:
    """Split `total` draws into fixed-size chunks (last one may be short)."""
    if total <= 0:
        return []
    full, rest = divmod(total, chunk)
    return [chunk] * full + ([rest] if rest else [])
