import logging
import os
import time
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import psutil
import yaml

# Upper bound on worker threads when the caller asks for "all cores".
MAX_THREADS = 64


def default_threads() -> int:
    """Physical core count, falling back to the logical count."""
    try:
        count = psutil.cpu_count(logical=False)
    except Exception as e:
        logging.warning(f"Could not read core count: {e}")
        count = None
    return max(1, min(MAX_THREADS, count or os.cpu_count() or 1))


def row_blocks(n: int, threads: int) -> list[slice]:
    """Split ``range(n)`` into at most ``threads`` contiguous, ordered slices."""
    if n <= 0:
        return []
    threads = max(1, min(threads, n))
    bounds = [round(k * n / threads) for k in range(threads + 1)]
    return [slice(bounds[k], bounds[k + 1]) for k in range(threads) if bounds[k + 1] > bounds[k]]


def map_row_blocks[T](fn: Callable[[slice], T], n: int, threads: int = 1) -> list[T]:
    """Apply ``fn`` to each row block and return the results in row order.

    Blocks are disjoint, so results do not depend on the thread count.
    """
    blocks = row_blocks(n, threads)
    if len(blocks) <= 1:
        return [fn(b) for b in blocks]
    with ThreadPoolExecutor(max_workers=len(blocks)) as pool:
        return list(pool.map(fn, blocks))


def resident_memory_mb() -> float:
    try:
        return psutil.Process().memory_info().rss / (1024 * 1024)
    except Exception as e:
        logging.warning(f"Could not read process memory: {e}")
        return 0.0


@dataclass
class RunReport:
    """Summary of one command run, written next to its outputs as YAML.

    Wall time and memory vary between runs; every other field is a function of the inputs.
    """

    command: str
    started: float = field(default_factory=time.perf_counter)
    values: dict = field(default_factory=dict)

    def add(self, **values) -> None:
        self.values.update(values)

    def finish(self) -> dict:
        report = {"command": self.command, **self.values}
        report["wall_time_seconds"] = round(time.perf_counter() - self.started, 6)
        report["resident_memory_mb"] = round(resident_memory_mb(), 3)
        return report

    def write(self, path: str | Path) -> dict:
        report = self.finish()
        Path(path).write_text(yaml.safe_dump(report, sort_keys=False))
        logging.info(f"Wrote run report: {path}")
        return report
