"""
Worker Pool management for parallel ray sweeps and grid evaluations
"""

import logging
import math
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence

import psutil

from ..config import Config

logger = logging.getLogger(__name__)


@dataclass
class TaskResult:
    """Result from processing a single work item"""
    index: int
    value: Any
    success: bool
    error: Optional[str] = None
    exception: Optional[BaseException] = None
    processing_time: float = 0.0


class WorkerCalculator:
    """Calculate the number of workers for a job"""

    # Estimated memory per worker in GB
    MEMORY_PER_WORKER = {
        'ray': 0.05,        # one dense-output trajectory
        'grid': 0.25,       # a chunk of Lax-Oleinik rows
        'trace': 0.05,
    }

    # Items below which threading costs more than it saves
    MIN_ITEMS_PER_WORKER = 4

    @staticmethod
    def calculate_optimal_workers(
        total_items: int,
        task_kind: str = 'ray',
        min_workers: int = 1,
        max_workers: int = 8,
        requested: int = 0
    ) -> int:
        """
        Calculate the worker count for a job

        Args:
            total_items: Number of independent work items
            task_kind: Key of MEMORY_PER_WORKER
            min_workers: Minimum number of workers
            max_workers: Maximum number of workers
            requested: Explicit thread count (0 for automatic)

        Returns:
            Number of workers
        """
        if requested > 0:
            return max(min_workers, requested)
        if total_items <= 0:
            return min_workers

        cores = psutil.cpu_count(logical=False) or os.cpu_count() or 1
        by_items = math.ceil(total_items / WorkerCalculator.MIN_ITEMS_PER_WORKER)
        optimal = min(cores, by_items, max_workers)
        optimal = WorkerCalculator.adjust_by_memory(optimal, task_kind)
        return max(min_workers, min(optimal, max_workers))

    @staticmethod
    def adjust_by_memory(workers: int, task_kind: str) -> int:
        """
        Adjust worker count based on available system memory

        Args:
            workers: Proposed number of workers
            task_kind: Key of MEMORY_PER_WORKER

        Returns:
            Adjusted number of workers
        """
        try:
            mem = psutil.virtual_memory()
            available_gb = mem.available / (1024 ** 3)
            mem_per_worker = WorkerCalculator.MEMORY_PER_WORKER.get(task_kind, 0.25)

            # Use 70% of available memory maximum
            max_by_memory = int(available_gb * 0.7 / mem_per_worker)
            adjusted = min(workers, max_by_memory)

            if adjusted < workers:
                logger.info("Reducing workers from %d to %d due to memory constraints "
                            "(available %.1fGB)", workers, adjusted, available_gb)
            return max(1, adjusted)

        except Exception as e:
            logger.warning("Could not check memory: %s", e)
            return workers


class ParallelProgressMonitor:
    """Log progress of a parallel job"""

    def __init__(self, total_items: int, num_workers: int, label: str = 'items'):
        self.total_items = total_items
        self.num_workers = num_workers
        self.label = label
        self.completed = 0
        self.failed = 0
        self.start_time = time.time()
        self.lock = threading.Lock()
        self.worker_times: Dict[int, List[float]] = {}
        self._next_report = 0.1

    def complete_item(self, worker_id: int, elapsed: float, success: bool = True):
        """Record a finished item; logs at every further 10% of the job"""
        with self.lock:
            self.worker_times.setdefault(worker_id, []).append(elapsed)
            self.completed += 1
            if not success:
                self.failed += 1
            fraction = self.completed / self.total_items if self.total_items else 1.0
            if fraction >= self._next_report:
                logger.debug("%s: %d/%d (%.0f%%)", self.label, self.completed,
                             self.total_items, 100 * fraction)
                self._next_report = math.floor(fraction * 10 + 1) / 10

    def finish(self):
        elapsed = time.time() - self.start_time
        logger.info("Completed %d %s with %d workers in %.2fs (%d failed)", self.completed,
                    self.label, self.num_workers, elapsed, self.failed)
        for worker_id, times in self.worker_times.items():
            logger.debug("Worker %d: %d items, avg %.3fs", worker_id % 1000, len(times),
                         sum(times) / len(times))


class WorkerPool:
    """Run independent work items in parallel with index-ordered results"""

    def __init__(self, config=Config, threads: Optional[int] = None):
        self.config = config
        self.min_workers = config.MIN_WORKER
        self.max_workers = config.MAX_WORKER
        self.threads = config.THREADS if threads is None else threads
        self.calculator = WorkerCalculator()

    def map_ordered(
        self,
        items: Sequence[Any],
        func: Callable[[Any], Any],
        task_kind: str = 'ray',
        label: str = 'items'
    ) -> List[TaskResult]:
        """
        Apply func to every item in parallel

        Args:
            items: Work items
            func: Called as func(item)
            task_kind: Memory profile used for worker sizing
            label: Name used in progress logging

        Returns:
            TaskResult list in the order of items
        """
        if not len(items):
            return []

        num_workers = self.calculator.calculate_optimal_workers(
            len(items), task_kind, self.min_workers, self.max_workers, self.threads)
        num_workers = min(num_workers, len(items))
        progress = ParallelProgressMonitor(len(items), num_workers, label)

        if num_workers == 1:
            results = [self._run_single(func, item, i, progress) for i, item in enumerate(items)]
        else:
            results: List[Optional[TaskResult]] = [None] * len(items)
            with ThreadPoolExecutor(max_workers=num_workers) as executor:
                futures = {executor.submit(self._run_single, func, item, i, progress): i
                           for i, item in enumerate(items)}
                for future in as_completed(futures):
                    results[futures[future]] = future.result()

        progress.finish()
        return results

    def map(self, items: Sequence[Any], func: Callable[[Any], Any], **kwargs) -> List[Any]:
        """map_ordered followed by collect"""
        return self.collect(self.map_ordered(items, func, **kwargs))

    @staticmethod
    def collect(results: List[TaskResult]) -> List[Any]:
        """Values in order; re-raises the first failure"""
        for result in results:
            if not result.success:
                if result.exception is not None:
                    raise result.exception
                raise RuntimeError(result.error)
        return [r.value for r in results]

    @staticmethod
    def _run_single(func: Callable, item: Any, index: int,
                    progress: ParallelProgressMonitor) -> TaskResult:
        worker_id = threading.get_ident()
        start_time = time.time()
        try:
            value = func(item)
            elapsed = time.time() - start_time
            progress.complete_item(worker_id, elapsed)
            return TaskResult(index=index, value=value, success=True, processing_time=elapsed)
        except Exception as e:
            elapsed = time.time() - start_time
            progress.complete_item(worker_id, elapsed, success=False)
            logger.debug("Item %d failed: %s", index, e)
            return TaskResult(index=index, value=None, success=False, error=str(e),
                              exception=e, processing_time=elapsed)
