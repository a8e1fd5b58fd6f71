from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Optional, Sequence, TypeVar

from src.utils.config import global_config

T = TypeVar("T")


def map_chunks(
    fn: Callable[[int, int], T], sizes: Sequence[int], threads: Optional[int] = None
) -> list[T]:
    """
    并行执行 fn(chunk_index, chunk_size)，结果按块序号返回。

    块的划分只取决于样本量和块大小，与线程数无关，
    因此结果与线程数无关。
    """
    workers = min(global_config.resolved_threads(threads), max(1, len(sizes)))
    if workers == 1:
        return [fn(index, size) for index, size in enumerate(sizes)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, index, size) for index, size in enumerate(sizes)]
        return [future.result() for future in futures]
