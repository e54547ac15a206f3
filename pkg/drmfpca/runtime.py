"""Runtime configuration and the shared worker pool."""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, TypeVar

from dotenv import load_dotenv

from .exceptions import ValidationError

load_dotenv()

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def resolve_threads(threads: Optional[int] = None) -> int:
    """Resolve the number of worker threads.

    Args:
        threads: Explicit worker count. If not provided, will attempt to load
            from the DRM_THREADS environment variable, falling back to the
            number of available cores.

    Returns:
        A positive worker count

    Raises:
        ValidationError: If the explicit or configured value is not a positive
            integer.
    """
    if threads is None:
        configured = os.getenv("DRM_THREADS")
        if configured:
            try:
                threads = int(configured)
            except ValueError:
                raise ValidationError(
                    f"DRM_THREADS must be a positive integer, got {configured!r}"
                )
        else:
            threads = os.cpu_count() or 1

    if threads < 1:
        raise ValidationError(f"Worker count must be positive, got {threads}")
    return threads


def parallel_map(
    func: Callable[[T], R], items: Sequence[T], threads: Optional[int] = None
) -> List[R]:
    """Apply ``func`` to every item, possibly concurrently.

    Results are returned in input order regardless of scheduling, so any
    reduction over them is reproducible.

    Args:
        func: Function applied to each item
        items: Items to process
        threads: Worker count (see ``resolve_threads``)

    Returns:
        List of results aligned with ``items``

    Example:
        ```python
        from drmfpca.runtime import parallel_map

        squares = parallel_map(lambda k: k * k, [1, 2, 3], threads=2)
        assert squares == [1, 4, 9]
        ```
    """
    workers = min(resolve_threads(threads), max(len(items), 1))
    if workers == 1:
        return [func(item) for item in items]

    logger.debug("Dispatching %d tasks to %d threads", len(items), workers)
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(func, items))
