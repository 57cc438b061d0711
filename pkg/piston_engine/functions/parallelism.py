import os
import concurrent
from typing import Callable, Optional, TypeVar
from concurrent.futures.thread import ThreadPoolExecutor

from dotenv import load_dotenv

load_dotenv()

THREADPOOL = ThreadPoolExecutor(int(os.getenv("THREADPOOL_N_THREADS", os.cpu_count() or 1)))

A = TypeVar("A")
B = TypeVar("B")


def par_map(
    items: list[A],
    func: Callable[[A], B],
    workers: Optional[int] = None,
    executor: Optional[concurrent.futures.Executor] = None,
) -> "list[B]":
    """Applies the function to each element and returns the results in submission order.
    workers=1 runs serially in the calling thread, any other count gets a dedicated pool,
    and None uses the shared THREADPOOL (sized by THREADPOOL_N_THREADS).
    """
    if workers is not None and workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    if workers == 1:
        return [func(item) for item in items]
    if executor is None and workers is not None:
        with ThreadPoolExecutor(workers) as pool:
            return par_map(items, func, executor=pool)

    executor = THREADPOOL if executor is None else executor
    futures: list[concurrent.futures.Future[B]] = [executor.submit(func, item) for item in items]
    results = []
    for fut in futures:
        results.append(fut.result())
    return results
