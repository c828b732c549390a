import math

import numpy as np
import pytest
from pydantic import ValidationError

from coshflows.errors import InvalidArgumentError
from coshflows.fokker_planck import linear_potential
from coshflows.membrane import (
    MembraneSetup,
    limit_problem,
    membrane_experiment,
    membrane_problem,
    membrane_sigma,
)


def _plateau(alpha):
    # α strictly inside the membrane, 0 on the bulk sides
    def tilt(s):
        s = np.asarray(s, dtype=float)
        return np.where((s > 0.0) & (s < 1.0), alpha, 0.0)

    return tilt


def test_unit_membrane_has_unit_transmission():
    assert membrane_sigma(MembraneSetup(), 1.0, 1.0) == pytest.approx(1.0)


def test_transmission_scales_with_mobility_and_densities():
    setup = MembraneSetup(a_star=0.5)
    assert membrane_sigma(setup, 1.0, 1.0) == pytest.approx(0.5)
    assert membrane_sigma(setup, 4.0, 1.0) == pytest.approx(1.0)


def test_constant_tilt_leaves_transmission_unchanged():
    setup = MembraneSetup(a_star=0.5, F=2.0)
    assert membrane_sigma(setup, 1.0, 1.0) == pytest.approx(0.5)


def test_interior_tilt_scales_transmission():
    alpha = 0.9
    setup = MembraneSetup(F=_plateau(alpha))
    assert membrane_sigma(setup, 1.0, 1.0) == pytest.approx(math.exp(-alpha), rel=1e-8)


def test_negative_density_is_rejected():
    with pytest.raises(InvalidArgumentError):
        membrane_sigma(MembraneSetup(), -1.0, 1.0)


@pytest.mark.parametrize("kwargs", [{"eps": 0.0}, {"a_star": 0.0}, {"a_minus": -1.0}])
def test_invalid_setups(kwargs):
    with pytest.raises(ValidationError):
        MembraneSetup(**kwargs)


def test_layouts():
    setup = MembraneSetup(eps=0.05)
    layout = membrane_problem(setup, n_bulk=10, n_membrane=4)
    assert layout.problem.n == 24
    assert layout.bulk_index.tolist() == list(range(10)) + list(range(14, 24))
    np.testing.assert_allclose(layout.problem.faces[[0, 10, 14, 24]], [-1.0, 0.0, 0.05, 1.05])
    limit = limit_problem(setup, n_bulk=10)
    assert limit.problem.n == 20
    assert limit.bulk_index.tolist() == list(range(20))


def test_limit_converges_and_transmission_is_recovered():
    table, fit = membrane_experiment(
        MembraneSetup(),
        [0.1, 0.01],
        T=0.2,
        rho0=linear_potential(-0.5, 1.25),
        n_bulk=20,
        n_membrane=5,
        n_steps=100,
    )
    errors = table.column("sup_error")
    assert errors[1] < errors[0]
    assert fit.eps == 0.01
    assert fit.sigma0 == pytest.approx(1.0)
    assert fit.relative_deviation < 0.2


def test_empty_eps_list():
    with pytest.raises(InvalidArgumentError):
        membrane_experiment(MembraneSetup(), [], T=0.1)
