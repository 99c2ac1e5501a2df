"""Row-block parallel map with results independent of the thread count."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")

BLOCK_ROWS = 8


def row_blocks(height: int, block_rows: int = BLOCK_ROWS) -> list[tuple[int, int]]:
    """Fixed ``[start, stop)`` row ranges; never depends on the worker count."""
    return [(start, min(start + block_rows, height)) for start in range(0, height, block_rows)]


def map_row_blocks(
    fn: Callable[[int, int], T], height: int, threads: int = 1, block_rows: int = BLOCK_ROWS
) -> list[T]:
    """Apply ``fn(start, stop)`` to every row block, returning results in block order."""
    blocks = row_blocks(height, block_rows)
    if threads <= 1 or len(blocks) <= 1:
        return [fn(a, b) for a, b in blocks]
    logger.debug("mapping %d row blocks on %d threads", len(blocks), threads)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda ab: fn(*ab), blocks))
