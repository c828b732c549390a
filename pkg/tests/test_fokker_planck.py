import math

import numpy as np
import pytest
from pydantic import ValidationError

from coshflows.errors import InvalidArgumentError
from coshflows.fokker_planck import (
    FVProblem,
    assemble_fp_graph,
    bernoulli,
    cosh_sqrt_flux,
    fv_evolve,
    fv_generator,
    graded_grid,
    linear_potential,
    named_potential,
    quartic_double_well,
    saddle_plateau_tilt,
    sg_flux,
    upwind_flux,
)
from coshflows.graph_system import check_detailed_balance


@pytest.fixture
def double_well():
    yield FVProblem.uniform(-1.5, 1.5, 40, quartic_double_well, gamma=0.5)


@pytest.mark.parametrize("z", [0.0, 1e-8, 0.3, -2.0, 40.0])
def test_bernoulli_reflection(z):
    assert bernoulli(-z) - bernoulli(z) == pytest.approx(z, abs=1e-12)


def test_bernoulli_limits():
    assert bernoulli(0.0) == 1.0
    assert bernoulli(800.0) == pytest.approx(0.0, abs=1e-300)
    assert bernoulli(-800.0) == pytest.approx(800.0)


def test_sg_flux_vanishes_without_force():
    assert sg_flux(1.0, 1.0, 2.0, 0.5, 0.0) == 0.0


def test_sg_flux_at_equal_densities():
    # ½τγ(B(−z) − B(z)) = ½τΞ when u_x = u_y
    assert sg_flux(2.0, 1.0, 1.0, 1.0, 0.7) == pytest.approx(0.7)
    assert sg_flux(2.0, 0.01, 1.0, 1.0, 0.7) == pytest.approx(0.7)


def test_sg_flux_vanishes_on_empty_cell():
    assert sg_flux(1.0, 1.0, 0.0, 1.0, 2.0) == 0.0


def test_sg_flux_tends_to_upwind():
    assert upwind_flux(2.0, 1.0, 0.0, 1.0) == pytest.approx(1.0)
    assert sg_flux(1.0, 1e-3, 2.0, 1.0, 1.0) == pytest.approx(upwind_flux(1.0, 2.0, 1.0, 1.0), rel=1e-3)


def test_sg_flux_survives_tiny_viscosity():
    value = sg_flux(1.0, 1e-12, 2.0, 1.0, 1.0)
    assert math.isfinite(value)
    assert value == pytest.approx(1.0, rel=1e-3)


def test_cosh_sqrt_flux():
    assert cosh_sqrt_flux(1.0, 0.5, 4.0, 1.0, 1.0) == pytest.approx(0.5 * 2.0 * math.sinh(1.0))


@pytest.mark.parametrize("tau, gamma", [(0.0, 1.0), (1.0, 0.0), (-1.0, 1.0)])
def test_fluxes_need_positive_coefficients(tau, gamma):
    with pytest.raises(InvalidArgumentError):
        sg_flux(tau, gamma, 1.0, 1.0, 1.0)


@pytest.mark.parametrize("scheme", ["SG", "CoshSqrt"])
def test_fv_graph_satisfies_detailed_balance(scheme):
    p = FVProblem.uniform(-1.5, 1.5, 30, quartic_double_well, gamma=0.5, scheme=scheme)
    g = assemble_fp_graph(p)
    assert check_detailed_balance(g).holds
    weights = p.volumes * np.exp(-p.potential / 0.5)
    np.testing.assert_allclose(g.pi, weights / weights.sum(), rtol=1e-12)


def test_upwind_has_no_graph():
    p = FVProblem.uniform(0.0, 1.0, 10, linear_potential(1.0), scheme="Upwind")
    with pytest.raises(InvalidArgumentError):
        assemble_fp_graph(p)


def test_fv_evolve_conserves_mass_and_dissipates(double_well, rng):
    rho0 = rng.dirichlet(np.ones(double_well.n))
    solution = fv_evolve(double_well, rho0, 0.5, n_steps=100)
    np.testing.assert_allclose(solution.states.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(np.diff(solution.energies) <= 1e-12)
    assert np.all(solution.states >= 0)


def test_stationary_state_is_kept(double_well):
    solution = fv_evolve(double_well, double_well.stationary(), 1.0, n_steps=20)
    np.testing.assert_allclose(solution.states[-1], double_well.stationary(), atol=1e-12)


def test_implicit_and_exact_propagation_agree(double_well, rng):
    rho0 = rng.dirichlet(np.ones(double_well.n))
    implicit = fv_evolve(double_well, rho0, 0.2, n_steps=2000)
    exact = fv_evolve(double_well, rho0, 0.2, n_steps=20, method="expm")
    np.testing.assert_allclose(implicit.states[-1], exact.states[-1], atol=1e-3)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"rho0": np.ones(3), "T": 1.0},
        {"rho0": -np.ones(40), "T": 1.0},
        {"rho0": np.ones(40), "T": 0.0},
        {"rho0": np.ones(40), "T": 1.0, "method": "euler"},
    ],
)
def test_fv_evolve_rejects_invalid_input(double_well, kwargs):
    with pytest.raises(InvalidArgumentError):
        fv_evolve(double_well, **kwargs)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"faces": [0.0, 1.0], "potential": [0.0], "mobility": []},
        {"faces": [0.0, 1.0, 0.5], "potential": [0.0, 0.0], "mobility": [1.0]},
        {"faces": [0.0, 1.0, 2.0], "potential": [0.0], "mobility": [1.0]},
        {"faces": [0.0, 1.0, 2.0], "potential": [0.0, 0.0], "mobility": [0.0]},
        {"faces": [0.0, 1.0, 2.0], "potential": [0.0, 0.0], "mobility": [1.0], "gamma": 0.0},
    ],
)
def test_invalid_problems(kwargs):
    with pytest.raises(ValidationError):
        FVProblem(**kwargs)


def _smooth_density(y):
    return 1.0 + 0.5 * np.cos(np.pi * y)


def _smooth_potential(y):
    return np.sin(2.0 * y)


def _fokker_planck_operator(y):
    # ∂_y(∂_y f + f V') for the smooth density and potential above
    f = _smooth_density(y)
    df = -0.5 * np.pi * np.sin(np.pi * y)
    d2f = -0.5 * np.pi**2 * np.cos(np.pi * y)
    dV, d2V = 2.0 * np.cos(2.0 * y), -4.0 * np.sin(2.0 * y)
    return d2f + df * dV + f * d2V


@pytest.mark.parametrize("scheme", ["SG", "CoshSqrt"])
def test_scheme_is_second_order_consistent(scheme):
    widths, errors = [], []
    for n in (20, 40, 80):
        p = FVProblem.uniform(0.0, 1.0, n, _smooth_potential, gamma=1.0, scheme=scheme)
        rho = _smooth_density(p.centers) * p.volumes
        rate = fv_generator(p) @ rho / p.volumes
        # the no-flux end faces are not consistent with this profile
        interior = slice(1, n - 1)
        error = np.abs(rate[interior] - _fokker_planck_operator(p.centers[interior]))
        widths.append(1.0 / n)
        errors.append(error.max())
    slope, _ = np.polyfit(np.log(widths), np.log(errors), 1)
    assert slope >= 1.8


def test_graded_grid_refines_the_center():
    faces = graded_grid(-2.0, 2.0, 100, center=0.0, width=0.2)
    widths = np.diff(faces)
    assert faces[0] == -2.0 and faces[-1] == 2.0
    assert widths[50] < widths[0]


def test_saddle_plateau_tilt():
    tilt = saddle_plateau_tilt(2.0)
    np.testing.assert_allclose(tilt(np.array([0.0, 0.5, 0.7, 1.5])), [2.0, 2.0, 0.0, 0.0])
    with pytest.raises(InvalidArgumentError):
        saddle_plateau_tilt(1.0, inner=0.7, outer=0.5)


def test_named_potentials():
    assert named_potential("linear", slope=2.0, offset=1.0)(np.array(3.0)) == pytest.approx(7.0)
    with pytest.raises(InvalidArgumentError):
        named_potential("harmonic")
    with pytest.raises(InvalidArgumentError):
        named_potential("linear", curvature=1.0)
