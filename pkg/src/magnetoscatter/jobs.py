"""
Running independent jobs (scattering runs, probes) on a thread pool.
"""
from __future__ import annotations

import os
import threading
from typing import Callable, Dict, Hashable, Mapping, TypeVar

from twisted.logger import Logger
from twisted.python.failure import Failure
from twisted.python.threadpool import ThreadPool

log = Logger()

K = TypeVar("K", bound=Hashable)
T = TypeVar("T")


def defaultWorkers() -> int:
    return os.cpu_count() or 1


class JobPool:
    """
    Runs keyed zero-argument callables and hands back their results in the
    order the keys were given, whatever order they finished in.
    """

    def __init__(self, workers: int = 1) -> None:
        if workers < 1:
            raise ValueError(f"need at least one worker, not {workers}")
        self.workers = workers

    def run(self, jobs: Mapping[K, Callable[[], T]]) -> Dict[K, T]:
        """
        Run every job; re-raise the first failure in key order.
        """
        if self.workers == 1 or len(jobs) <= 1:
            return {key: job() for key, job in jobs.items()}

        outcomes: Dict[K, object] = {}
        finished = threading.Condition()
        pool = ThreadPool(minthreads=0, maxthreads=self.workers,
                          name="magnetoscatter")

        def collect(key: K) -> Callable[[bool, object], None]:
            def done(succeeded: bool, result: object) -> None:
                with finished:
                    outcomes[key] = result
                    finished.notify()

            return done

        pool.start()
        try:
            for key, job in jobs.items():
                pool.callInThreadWithCallback(collect(key), job)
            with finished:
                finished.wait_for(lambda: len(outcomes) == len(jobs))
        finally:
            pool.stop()

        results: Dict[K, T] = {}
        for key in jobs:
            outcome = outcomes[key]
            if isinstance(outcome, Failure):
                log.failure("job {key} failed", outcome, key=key)
                outcome.raiseException()
            results[key] = outcome  # type: ignore[assignment]
        log.debug("ran {count} jobs on {workers} workers", count=len(jobs),
                  workers=self.workers)
        return results
