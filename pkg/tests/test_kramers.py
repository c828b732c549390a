import math

import numpy as np
import pytest
from pydantic import ValidationError

from coshflows.errors import InvalidArgumentError
from coshflows.fokker_planck import quartic_double_well, saddle_plateau_tilt
from coshflows.kramers import (
    KramersSetup,
    fitted_decay_rate,
    kramers_constants,
    kramers_experiment,
    kramers_limit_ode,
    kramers_run,
)


@pytest.fixture
def setup():
    yield KramersSetup(H=quartic_double_well, a=-1.0, b=1.0, c=0.0, domain=(-2.0, 2.0), eps=0.1)


def test_symmetric_wells_share_the_weight(setup):
    constants = kramers_constants(setup)
    assert constants.gamma_a == pytest.approx(0.5)
    assert constants.gamma_b == pytest.approx(0.5)
    assert constants.well_fraction_a == pytest.approx(0.5, rel=1e-8)
    assert constants.H2_a == pytest.approx(8.0, rel=1e-6)
    assert constants.H2_c == pytest.approx(-4.0, rel=1e-6)


def test_asymptotic_time_scale(setup):
    # 2π(2/√8)(1/√4) for the quartic double well
    constants = kramers_constants(setup.with_eps(0.02))
    assert constants.asymptotic_constant == pytest.approx(2.0 * math.pi / math.sqrt(8.0), rel=1e-6)
    assert constants.tau_eps / constants.tau_asymptotic == pytest.approx(1.0, rel=0.05)
    assert constants.log_tau_eps == pytest.approx(math.log(constants.tau_eps))


def test_log_time_scale_stays_finite(setup):
    constants = kramers_constants(setup.with_eps(1e-3))
    assert math.isfinite(constants.log_tau_eps)
    assert constants.log_tau_eps > 900.0


def test_limit_rates_without_tilt(setup):
    limit = kramers_limit_ode(setup)
    np.testing.assert_allclose(limit.graph.kappa, [[0.0, 2.0], [2.0, 0.0]], rtol=1e-6)
    assert limit.relaxation_rate == pytest.approx(4.0, rel=1e-6)


def test_saddle_tilt_scales_rates(setup):
    alpha = 0.8
    tilted = setup.model_copy(update={"F": saddle_plateau_tilt(alpha)})
    base = kramers_limit_ode(setup).relaxation_rate
    assert kramers_limit_ode(tilted).relaxation_rate == pytest.approx(base * math.exp(-alpha), rel=1e-6)


def test_well_mass_closed_form(setup):
    limit = kramers_limit_ode(setup)
    times = np.array([0.0, 0.25, 1.0])
    np.testing.assert_allclose(limit.well_mass_a(1.0, times), 0.5 + 0.5 * np.exp(-4.0 * times), rtol=1e-6)


def test_fitted_decay_rate():
    times = np.linspace(0.0, 1.0, 51)
    assert fitted_decay_rate(times, 0.3 * np.exp(-2.0 * times)) == pytest.approx(2.0)
    dt = times[1]
    implicit = 0.3 * (1.0 + 2.0 * dt) ** -np.arange(times.size)
    assert fitted_decay_rate(times, implicit, dt=dt) == pytest.approx(2.0)
    assert math.isnan(fitted_decay_rate(times[:2], [1.0, 0.5]))


def test_fv_well_masses_follow_the_limit(setup):
    run = kramers_run(setup, T=1.0, n_cells=400, n_steps=200)
    assert run.mass_a[0] == pytest.approx(1.0)
    assert run.stationary_mass_a == pytest.approx(0.5, rel=1e-6)
    assert run.fitted_rate == pytest.approx(run.limit_rate, rel=0.25)
    assert run.sup_error < 0.1


def test_experiment_table(setup):
    table = kramers_experiment(setup, [0.2, 0.1], T=0.5, n_cells=200, n_steps=50)
    assert table.columns == ("eps", "sup_error", "fitted_rate")
    assert table.column("eps") == [0.2, 0.1]
    assert len(table.runtimes) == 2


@pytest.mark.parametrize("eps_list", [[], [0.1, 0.2], [0.1, 0.1]])
def test_experiment_rejects_unordered_eps(setup, eps_list):
    with pytest.raises(InvalidArgumentError):
        kramers_experiment(setup, eps_list, T=0.5, n_cells=200, n_steps=50)


@pytest.mark.parametrize(
    "update",
    [
        {"a": 0.5},
        {"domain": (-0.5, 2.0)},
        {"eps": 0.0},
        {"H": lambda y: (1.0 - np.asarray(y) ** 2) ** 2 + 0.1},
        {"H": lambda y: np.zeros_like(np.asarray(y, dtype=float))},
    ],
)
def test_invalid_setups(update):
    data = {"H": quartic_double_well, "a": -1.0, "b": 1.0, "c": 0.0, "domain": (-2.0, 2.0), "eps": 0.1}
    with pytest.raises(ValidationError):
        KramersSetup(**{**data, **update})
