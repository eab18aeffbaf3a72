"""
Counter-based random substreams and an order-preserving task runner.

Every random draw in a run comes from substream(master_seed, name, *indices).
A substream depends only on its key, never on how tasks are scheduled, so
serial and threaded runs produce identical numbers.
"""

import logging
import zlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

import numpy as np

logger = logging.getLogger(__name__)

T = TypeVar('T')
R = TypeVar('R')


def stream_key(name: str) -> int:
    """Stable integer id for a named stream."""
    return zlib.crc32(name.encode('utf-8'))


def substream(master_seed: int, name: str, *indices: int) -> np.random.Generator:
    """
    Build the generator for one task.

    Args:
        master_seed: Run-level seed (unsigned 64-bit)
        name: Stream name, e.g. 'instance' or 'cloud'
        indices: Task indices (trial, block, attempt, ...)

    Returns:
        numpy Generator backed by the Philox counter-based bit generator
    """
    if master_seed < 0:
        raise ValueError(f"master seed must be non-negative, got {master_seed}")
    key = (stream_key(name),) + tuple(int(i) for i in indices)
    sequence = np.random.SeedSequence(entropy=int(master_seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(sequence))


def child_seed(master_seed: int, name: str, *indices: int) -> int:
    """Derive an independent integer master seed for a nested task."""
    if master_seed < 0:
        raise ValueError(f"master seed must be non-negative, got {master_seed}")
    key = (stream_key(name),) + tuple(int(i) for i in indices)
    sequence = np.random.SeedSequence(entropy=int(master_seed), spawn_key=key)
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def stream_label(master_seed: int, name: str, *indices: int) -> str:
    """Human-readable id of a substream, echoed into reports."""
    suffix = ''.join(f"/{int(i)}" for i in indices)
    return f"{master_seed}:{name}{suffix}"


def run_tasks(fn: Callable[[T], R], items: Iterable[T], threads: int = 1) -> List[R]:
    """
    Run independent tasks and return their results in input order.

    Args:
        fn: Task function
        items: Task arguments
        threads: Worker count; results do not depend on it

    Returns:
        List of results, one per item, in item order
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]

    logger.debug(f"Running {len(items)} tasks on {threads} threads")
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
