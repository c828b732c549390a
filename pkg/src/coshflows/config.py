"""Experiment configuration files."""

import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Literal, TypeVar

from pydantic import BaseModel, ConfigDict, PrivateAttr

from coshflows.errors import InvalidArgumentError
from coshflows.fixtures import load_fixture

logger = logging.getLogger(__name__)

FIXTURE_PREFIX = "fixture:"
DEFAULT_TIME_LIMIT_S = 600.0

ExperimentKind = Literal[
    "evolve", "edp", "tilt", "reduce", "chain", "kramers", "membrane", "fv", "rre", "gillespie"
]

S = TypeVar("S", bound=BaseModel)


class ExperimentConfig(BaseModel):
    """One experiment run.

    ``inputs`` maps input names to ``fixture:<name>`` or to JSON files relative
    to the config file. ``parameters`` is validated by the parameter model the
    experiment kind registers.
    """

    model_config = ConfigDict(extra="forbid")

    kind: ExperimentKind
    inputs: dict[str, str] = {}
    parameters: dict[str, Any] = {}
    output_dir: str = "out"
    seed: int = 0
    time_limit_s: float = DEFAULT_TIME_LIMIT_S

    _base_dir: Path = PrivateAttr(default_factory=Path.cwd)
    _sha256: str = PrivateAttr(default="")

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        """Parse and validate a config file; every referenced file must exist."""
        path = Path(path)
        raw = path.read_bytes()
        config = cls.model_validate(json.loads(raw))
        config._base_dir = path.resolve().parent
        config._sha256 = hashlib.sha256(raw).hexdigest()
        for name, reference in config.inputs.items():
            if not reference.startswith(FIXTURE_PREFIX) and not config.resolve(reference).is_file():
                raise InvalidArgumentError(f"input {name!r} refers to a missing file {reference!r}")
        return config

    @property
    def sha256(self) -> str:
        return self._sha256

    @property
    def output_path(self) -> Path:
        return self.resolve(self.output_dir)

    def resolve(self, reference: str) -> Path:
        candidate = Path(reference)
        return candidate if candidate.is_absolute() else self._base_dir / candidate

    def load_input(self, name: str, schema: type[S]) -> S:
        """Load input ``name`` as ``schema`` from a fixture or a JSON file."""
        try:
            reference = self.inputs[name]
        except KeyError:
            raise InvalidArgumentError(f"missing input {name!r} for kind {self.kind!r}") from None
        if reference.startswith(FIXTURE_PREFIX):
            spec = load_fixture(reference[len(FIXTURE_PREFIX) :])
            if not isinstance(spec, schema):
                raise InvalidArgumentError(
                    f"fixture {reference!r} is a {type(spec).__name__}, expected {schema.__name__}"
                )
            return spec
        logger.debug("reading input %s from %s", name, reference)
        return schema.model_validate_json(self.resolve(reference).read_text())
