import json
import logging
import os
import tempfile
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable

import numpy as np
from pydantic import ValidationError

from coshflows import __version__
from coshflows.config import ExperimentConfig
from coshflows.errors import InvalidArgumentError, NumericalFailureError
from coshflows.experiments import ExperimentResult, RunContext, get_experiment
from coshflows.sweeps import Deadline

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERICAL = 3

ErrorHandler = Callable[[Exception, Path | None], int]


def _json_default(value: Any):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def dumps(payload: Any) -> str:
    return json.dumps(payload, sort_keys=True, indent=2, default=_json_default) + "\n"


def write_atomic(path: Path, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file in the same directory."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def default_invalid_input_handler(error: Exception, output_dir: Path | None) -> int:
    if isinstance(error, ValidationError):
        for detail in error.errors():
            location = ".".join(str(part) for part in detail["loc"]) or "<root>"
            logger.error("invalid input at %s: %s", location, detail["msg"])
    else:
        logger.error("invalid input: %s", error)
    return EXIT_INVALID


def default_numerical_failure_handler(error: Exception, output_dir: Path | None) -> int:
    logger.error("numerical failure: %s", error)
    if output_dir is not None:
        report = {
            "error": type(error).__name__,
            "message": str(error),
            "report": getattr(error, "report", {}),
        }
        write_atomic(output_dir / "failure.json", dumps(report))
        logger.info("failure report written to %s", output_dir / "failure.json")
    return EXIT_NUMERICAL


class ExperimentRunner:
    """Runs experiment configs and maps failures to exit codes.

    Errors are dispatched to the handler registered for the closest class in
    the exception's MRO. Invalid input (schema violations, malformed JSON,
    missing files, bad arguments) exits with 2 and numerical failures exit with
    3 after preserving their report in ``failure.json``. Use
    :meth:`register_error_handler` to override either behaviour or to handle
    further exception types.

    Parameters
    ----------
    threads : int, optional
        Worker count for sweeps; read from ``COSHFLOWS_THREADS`` when omitted.
    """

    def __init__(self, threads: int | None = None):
        self.threads = threads
        self._error_handlers: dict[type[BaseException], ErrorHandler] = {}
        self._register_error_handlers()

    def _register_error_handlers(self) -> None:
        for exc_type in (ValidationError, InvalidArgumentError, json.JSONDecodeError, OSError):
            self.register_error_handler(exc_type, default_invalid_input_handler)
        self.register_error_handler(NumericalFailureError, default_numerical_failure_handler)

    def register_error_handler(self, exc_type: type[BaseException], f: ErrorHandler) -> None:
        """Add a handler for ``exc_type`` and its subclasses.

        Parameters
        ----------
        exc_type : type
            The exception class to handle.
        f : Callable
            Called as ``f(error, output_dir)``; returns the exit code. The
            output directory is None when the config could not be loaded.
        """
        self._error_handlers[exc_type] = f

    def _handler_for(self, error: BaseException) -> ErrorHandler | None:
        for cls in type(error).__mro__:
            if cls in self._error_handlers:
                return self._error_handlers[cls]
        return None

    def execute(self, config: ExperimentConfig) -> ExperimentResult:
        """Run one validated config without writing anything."""
        context = RunContext(
            config=config, deadline=Deadline(config.time_limit_s), threads=self.threads
        )
        logger.info("running %s experiment (seed %d)", config.kind, config.seed)
        return get_experiment(config.kind)(context)

    def run(self, config_path: str | Path) -> int:
        """Run a config file and write its artifacts; returns the exit code."""
        output_dir = None
        try:
            config = ExperimentConfig.load(config_path)
            output_dir = config.output_path
            started = datetime.now(timezone.utc)
            result = self.execute(config)
            finished = datetime.now(timezone.utc)
            self._write(config, result, started, finished)
        except Exception as error:
            handler = self._handler_for(error)
            if handler is None:
                raise
            return handler(error, output_dir)
        return EXIT_OK

    def _write(
        self,
        config: ExperimentConfig,
        result: ExperimentResult,
        started: datetime,
        finished: datetime,
    ) -> None:
        out = config.output_path
        artifacts = {name: table.to_csv() for name, table in result.tables.items()}
        artifacts.update({name: dumps(report) for name, report in result.reports.items()})
        manifest = {
            "kind": config.kind,
            "config_sha256": config.sha256,
            "version": __version__,
            "seed": config.seed,
            "started": started.isoformat(),
            "finished": finished.isoformat(),
            "wall_clock_s": (finished - started).total_seconds(),
            "runtimes_s": result.runtimes(),
            "artifacts": sorted(artifacts),
        }
        for name, text in artifacts.items():
            write_atomic(out / name, text)
        write_atomic(out / "manifest.json", dumps(manifest))
        logger.info("wrote %d artifacts to %s", len(artifacts), out)
