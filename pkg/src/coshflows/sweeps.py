"""Parameter sweeps: error tables, the worker pool and the wall-clock guard."""

import io
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

from pydantic import BaseModel, ConfigDict

from coshflows.errors import BudgetExceededError, InvalidArgumentError

logger = logging.getLogger(__name__)

THREADS_ENV = "COSHFLOWS_THREADS"

P = TypeVar("P")
R = TypeVar("R")


def thread_count(threads: int | None = None) -> int:
    """Worker count: explicit value, else ``COSHFLOWS_THREADS``, else 1."""
    if threads is None:
        raw = os.environ.get(THREADS_ENV, "1")
        try:
            threads = int(raw)
        except ValueError:
            raise InvalidArgumentError(f"{THREADS_ENV} must be an integer, got {raw!r}")
    return max(1, threads)


class Deadline:
    """Wall-clock cap checked between sweep points."""

    def __init__(self, limit_s: float | None):
        self.limit_s = limit_s
        self.started = time.monotonic()

    def elapsed(self) -> float:
        return time.monotonic() - self.started

    def check(self, label: str = "") -> None:
        if self.limit_s is not None and self.elapsed() > self.limit_s:
            raise BudgetExceededError(
                f"wall-clock budget of {self.limit_s:.0f}s exceeded {label}".strip(),
                {"elapsed_s": self.elapsed(), "limit_s": self.limit_s},
            )


def format_number(value) -> str:
    """Shortest round-trip text of a number; integers stay integers."""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


class ErrorTable(BaseModel):
    """A small numeric table with fixed column order.

    Runtimes are kept beside the rows, not inside them, so the CSV content of
    identical runs is byte-identical.
    """

    model_config = ConfigDict(frozen=True)

    columns: tuple[str, ...]
    rows: tuple[tuple[float | int | str | bool, ...], ...]
    runtimes: tuple[float, ...] = ()

    def column(self, name: str) -> list:
        index = self.columns.index(name)
        return [row[index] for row in self.rows]

    def to_csv(self) -> str:
        buffer = io.StringIO()
        buffer.write(",".join(self.columns) + "\n")
        for row in self.rows:
            buffer.write(",".join(format_number(value) for value in row) + "\n")
        return buffer.getvalue()


def run_sweep(
    fn: Callable[[P], R],
    points: Iterable[P],
    threads: int | None = None,
    deadline: Deadline | None = None,
) -> list[tuple[R, float]]:
    """Evaluate ``fn`` on every point, in order, returning (result, runtime) pairs."""
    points = list(points)

    def timed(point: P) -> tuple[R, float]:
        if deadline is not None:
            deadline.check(f"before sweep point {point!r}")
        start = time.perf_counter()
        result = fn(point)
        return result, time.perf_counter() - start

    workers = min(thread_count(threads), max(1, len(points)))
    logger.debug("sweeping %d points on %d workers", len(points), workers)
    if workers == 1:
        return [timed(point) for point in points]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(timed, points))
