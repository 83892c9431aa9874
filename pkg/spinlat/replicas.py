# -*- coding: utf-8 -*-
""" Replica execution.

A replica is one task tuple handed to a module level function.
Tasks carry their own derived seed, so results do not depend on which
worker runs them or in which order.
"""

from multiprocessing import Pool
from typing import Any, Callable, List, Sequence

from spinlat.spinlat_logger import get_stdout_logger

LOGGER = get_stdout_logger(name=__name__, level='INFO')


def run_replicas(function: Callable[[Any], Any], tasks: Sequence[Any], workers: int = 1) -> List[Any]:
    """ Maps ``function`` over ``tasks`` and returns the results in task order.

    :param function: Module level function, picklable for the pool.
    :param tasks:    One argument per replica.
    :param workers:  Pool size, 1 runs everything in this process.
    """
    _tasks = list(tasks)
    if workers <= 1 or len(_tasks) <= 1:
        return [function(task) for task in _tasks]
    _workers = min(workers, len(_tasks))
    LOGGER.info("Running %d replicas on %d workers.", len(_tasks), _workers)
    with Pool(processes=_workers) as pool:
        return pool.map(function, _tasks)
