import hashlib
import json

import pytest
from pydantic import ValidationError

from coshflows.config import ExperimentConfig
from coshflows.errors import InvalidArgumentError
from coshflows.schemas import GraphSpec, ReactionSpec


@pytest.fixture
def write_config(tmp_path):
    def write(payload, name="config.json"):
        path = tmp_path / name
        path.write_text(json.dumps(payload))
        return path

    yield write


def test_load_records_hash_and_base_dir(write_config, tmp_path):
    path = write_config({"kind": "reduce", "inputs": {"network": "fixture:3-chain"}, "output_dir": "runs/a"})
    config = ExperimentConfig.load(path)
    assert config.sha256 == hashlib.sha256(path.read_bytes()).hexdigest()
    assert config.output_path == tmp_path / "runs" / "a"
    assert config.seed == 0


def test_fixture_input(write_config):
    config = ExperimentConfig.load(write_config({"kind": "evolve", "inputs": {"graph": "fixture:two-node"}}))
    spec = config.load_input("graph", GraphSpec)
    assert spec.to_graph().nodes == ("a", "b")


def test_file_input_relative_to_config(write_config, tmp_path):
    (tmp_path / "graph.json").write_text(
        json.dumps({"nodes": ["x", "y"], "pi": [0.5, 0.5], "kappa": [["x", "y", 1.0], ["y", "x", 1.0]]})
    )
    config = ExperimentConfig.load(write_config({"kind": "evolve", "inputs": {"graph": "graph.json"}}))
    assert config.load_input("graph", GraphSpec).nodes == ["x", "y"]


def test_missing_input_file(write_config):
    with pytest.raises(InvalidArgumentError):
        ExperimentConfig.load(write_config({"kind": "evolve", "inputs": {"graph": "absent.json"}}))


@pytest.mark.parametrize(
    "payload",
    [
        {"kind": "teleport"},
        {"kind": "evolve", "unexpected": 1},
        {"kind": "evolve", "seed": "zero"},
    ],
)
def test_invalid_configs(write_config, payload):
    with pytest.raises(ValidationError):
        ExperimentConfig.load(write_config(payload))


def test_input_schema_mismatch(write_config):
    config = ExperimentConfig.load(write_config({"kind": "rre", "inputs": {"network": "fixture:two-node"}}))
    with pytest.raises(InvalidArgumentError):
        config.load_input("network", ReactionSpec)


def test_missing_input_name(write_config):
    config = ExperimentConfig.load(write_config({"kind": "evolve"}))
    with pytest.raises(InvalidArgumentError):
        config.load_input("graph", GraphSpec)


def test_unknown_fixture(write_config):
    config = ExperimentConfig.load(write_config({"kind": "evolve", "inputs": {"graph": "fixture:nothing"}}))
    with pytest.raises(InvalidArgumentError):
        config.load_input("graph", GraphSpec)
