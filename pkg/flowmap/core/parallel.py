from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, TypeVar

import psutil

from flowmap.config import settings

T = TypeVar("T")
R = TypeVar("R")


def worker_count(requested: Optional[int] = None) -> int:
	"""Worker cap: explicit request, else FLOWMAP_THREADS, else physical cores"""
	if requested is not None and requested > 0:
		return requested
	if settings.THREADS > 0:
		return settings.THREADS
	return psutil.cpu_count(logical=False) or 1


def chunk_bounds(n_items: int, chunk_size: int) -> List[range]:
	return [range(lo, min(lo + chunk_size, n_items)) for lo in range(0, n_items, chunk_size)]


def ordered_map(fn: Callable[[T], R], items: Sequence[T], workers: Optional[int] = None) -> List[R]:
	"""Apply ``fn`` to every item, possibly in parallel; results keep input order."""
	n_workers = min(worker_count(workers), max(len(items), 1))
	if n_workers <= 1:
		return [fn(item) for item in items]
	with ThreadPoolExecutor(max_workers=n_workers, thread_name_prefix="flowmap") as pool:
		return list(pool.map(fn, items))
