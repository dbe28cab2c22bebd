"""Deterministic worker pool shared by the data-parallel services.

Results are always returned in submission order, so reductions performed by
the caller see the same sequence regardless of the number of workers.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

from src.core.config import settings

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def ordered_map(func: Callable[[T], R], items: Iterable[T], workers: Optional[int] = None) -> List[R]:
    """Apply ``func`` to every item, possibly in threads, keeping input order.

    Args:
        func: Pure function of one item.
        items: Work items.
        workers: Worker cap; defaults to ``settings.threads`` (IDSLAB_THREADS).

    Returns:
        List of results in the order of ``items``.
    """
    work = list(items)
    workers = workers or settings.threads
    if workers <= 1 or len(work) <= 1:
        return [func(item) for item in work]
    logger.debug(f"Dispatching {len(work)} work items over {workers} threads")
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(func, work))
