# @Author: ggufquant
# @Date:   2026-10-19
# @Filename: parallel_processing.py
"""Parallelization routines."""

import os
from concurrent.futures import ThreadPoolExecutor, as_completed

from tqdm import tqdm

from .exceptions import ConfigError

NUM_THREADS_ENV = 'GGUFQUANT_NUM_THREADS'


def default_num_threads():
    """Worker count from GGUFQUANT_NUM_THREADS, 1 if unset."""
    value = os.environ.get(NUM_THREADS_ENV)
    if not value:
        return 1
    try:
        n_threads = int(value)
    except ValueError:
        raise ConfigError('{} has to be a positive integer, got {!r}'.format(
            NUM_THREADS_ENV, value))
    if n_threads < 1:
        raise ConfigError('{} has to be a positive integer, got {!r}'.format(
            NUM_THREADS_ENV, value))
    return n_threads


def parallel_process(array, function, n_jobs=1, use_kwargs=False, front_num=3,
                     progress=True, desc=None, executor=None):
    """A parallel version of the map function with a progress bar.

    numpy releases the GIL in the heavy array operations, so the work items
    run on a thread pool and share the caller's arrays without copies.

    Args:
        array (array-like): An array to iterate over.
        function (function): A python function to apply to the elements of array
        n_jobs (int, default=1): The number of worker threads to use
        use_kwargs (boolean, default=False): Whether to consider the elements of array as dictionaries of
            keyword arguments to function
        front_num (int, default=3): The number of iterations to run serially before kicking off the parallel job.
            Useful for catching bugs
        progress (boolean, default=True): Show a tqdm progress bar on the error stream
        desc (str): Label of the progress bar
        executor (ThreadPoolExecutor): Reuse an existing pool instead of creating one
    Returns:
        [function(array[0]), function(array[1]), ...]
    Raises:
        The first exception raised by a work item, in input order.
    """
    array = list(array)

    def call(item):
        return function(**item) if use_kwargs else function(item)

    # We run the first few iterations serially to catch bugs
    front = [call(item) for item in array[:front_num]]
    rest = array[front_num:]
    # If we set n_jobs to 1, just run a list comprehension. This is useful for benchmarking and debugging.
    if (n_jobs == 1 and executor is None) or not rest:
        return front + [call(item) for item in tqdm(
            rest, desc=desc, disable=not progress)]

    pool = executor or ThreadPoolExecutor(max_workers=n_jobs)
    try:
        futures = [pool.submit(call, item) for item in rest]
        kwargs = {
            'total': len(futures),
            'unit': 'it',
            'unit_scale': True,
            'leave': True,
            'desc': desc,
            'disable': not progress
        }
        # Print out the progress as tasks complete
        for f in tqdm(as_completed(futures), **kwargs):
            pass
    finally:
        if executor is None:
            pool.shutdown(wait=True)
    return front + [future.result() for future in futures]
