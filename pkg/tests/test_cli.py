import json

import pytest

from coshflows import __version__
from coshflows.cli import main
from coshflows.errors import NumericalFailureError
from coshflows.experiments import EXPERIMENTS
from coshflows.fixtures import FIXTURES, fixture_filename
from coshflows.runner import EXIT_INVALID, EXIT_NUMERICAL, EXIT_OK, ExperimentRunner


@pytest.fixture
def config_file(tmp_path):
    def write(payload, name="config.json"):
        path = tmp_path / name
        path.write_text(json.dumps(payload) if isinstance(payload, dict) else payload)
        return path

    yield write


def _capacity_rows(path):
    lines = path.read_text().splitlines()
    assert lines[0] == "method,capacity"
    return {method: float(value) for method, value in (line.split(",") for line in lines[1:])}


def test_reduce_three_chain(config_file, tmp_path):
    path = config_file({"kind": "reduce", "inputs": {"network": "fixture:3-chain"}, "output_dir": "out"})
    assert main(["run", str(path)]) == EXIT_OK
    out = tmp_path / "out"
    rows = _capacity_rows(out / "capacity.csv")
    assert rows["dirichlet"] == pytest.approx(0.25)
    assert rows["elimination_0"] == pytest.approx(0.25)
    assert rows["literal_k_chain"] == pytest.approx(1.0)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["kind"] == "reduce"
    assert manifest["version"] == __version__
    assert manifest["artifacts"] == ["capacity.csv", "capacity.json"]


def test_identical_runs_write_identical_tables(config_file, tmp_path):
    for name in ("first", "second"):
        path = config_file(
            {
                "kind": "evolve",
                "inputs": {"graph": "fixture:5-node-random"},
                "parameters": {"T": 1.0, "n_output": 11},
                "output_dir": name,
            },
            name=f"{name}.json",
        )
        assert main(["-q", "run", str(path)]) == EXIT_OK
    first = (tmp_path / "first" / "trajectory.csv").read_bytes()
    assert first == (tmp_path / "second" / "trajectory.csv").read_bytes()


@pytest.mark.parametrize(
    "payload",
    [
        "{not json",
        {"kind": "evolve", "inputs": {"graph": "fixture:two-node"}, "output_dir": "out"},
        {"kind": "evolve", "inputs": {"graph": "fixture:two-node"}, "parameters": {"T": -1.0}, "output_dir": "out"},
        {"kind": "rre", "inputs": {"network": "fixture:two-node"}, "output_dir": "out"},
    ],
)
def test_invalid_input_writes_nothing(config_file, tmp_path, payload):
    path = config_file(payload)
    assert main(["run", str(path)]) == EXIT_INVALID
    assert not (tmp_path / "out").exists()


def test_missing_config(tmp_path):
    assert main(["run", str(tmp_path / "absent.json")]) == EXIT_INVALID


def test_numerical_failure_keeps_report(config_file, tmp_path, monkeypatch):
    def diverge(context):
        raise NumericalFailureError("solver diverged", {"residual": 1.5})

    monkeypatch.setitem(EXPERIMENTS, "evolve", diverge)
    path = config_file({"kind": "evolve", "output_dir": "out"})
    assert main(["run", str(path)]) == EXIT_NUMERICAL
    failure = json.loads((tmp_path / "out" / "failure.json").read_text())
    assert failure["error"] == "NumericalFailureError"
    assert failure["report"] == {"residual": 1.5}
    assert not (tmp_path / "out" / "manifest.json").exists()


def test_registered_handler_overrides_default(config_file, monkeypatch):
    def diverge(context):
        raise NumericalFailureError("solver diverged")

    monkeypatch.setitem(EXPERIMENTS, "evolve", diverge)
    runner = ExperimentRunner()
    seen = []
    runner.register_error_handler(NumericalFailureError, lambda error, out: seen.append(error) or 7)
    assert runner.run(config_file({"kind": "evolve"})) == 7
    assert len(seen) == 1


def test_fixtures_dump(tmp_path, capsys):
    assert main(["fixtures", "--dump", str(tmp_path / "fixtures")]) == EXIT_OK
    listing = capsys.readouterr().out
    for name in FIXTURES:
        assert name in listing
        assert (tmp_path / "fixtures" / fixture_filename(name)).is_file()


def test_dumped_fixture_runs_from_file(tmp_path):
    main(["fixtures", "--dump", str(tmp_path)])
    path = tmp_path / "reduce.json"
    path.write_text(
        json.dumps(
            {"kind": "reduce", "inputs": {"network": fixture_filename("6-chain")}, "output_dir": "out"}
        )
    )
    assert main(["run", str(path)]) == EXIT_OK
    assert _capacity_rows(tmp_path / "out" / "capacity.csv")["dirichlet"] == pytest.approx(0.1)


def test_check_suite_passes(capsys):
    assert main(["check", "--seed", "0"]) == EXIT_OK
    assert "FAIL" not in capsys.readouterr().out


@pytest.mark.parametrize("argv, code", [(["--version"], 0), (["--help"], 0), ([], 2), (["fly"], 2)])
def test_argument_errors(argv, code):
    assert main(argv) == code


def test_edp_report_brackets_the_solution(config_file, tmp_path):
    path = config_file(
        {
            "kind": "edp",
            "inputs": {"graph": "fixture:two-node"},
            "parameters": {"dt_list": [0.01, 0.005], "rho0": [0.9, 0.1], "n_random": 100},
            "output_dir": "out",
            "seed": 4,
        }
    )
    assert main(["-q", "run", str(path)]) == EXIT_OK
    report = json.loads((tmp_path / "out" / "edp_report.json").read_text())
    assert report["n_random"] == 100
    assert report["min_I_T"] >= -1e-9
    assert report["perturbed_I_T"] > 1e-3
    assert report["order_ratio"] == pytest.approx(1.0, abs=0.1)


def test_gillespie_report_rates(config_file, tmp_path):
    path = config_file(
        {
            "kind": "gillespie",
            "inputs": {"graph": "fixture:two-node"},
            "parameters": {"n_particles": 5000, "T": 2.0, "n_output": 11},
            "output_dir": "out",
            "seed": 42,
        }
    )
    assert main(["-q", "run", str(path)]) == EXIT_OK
    report = json.loads((tmp_path / "out" / "gillespie_report.json").read_text())
    assert 0.0 <= report["ldp_rate_empirical"] < 1e-2
    assert report["ldp_rate_perturbed"] > 10.0 * report["ldp_rate_empirical"]
