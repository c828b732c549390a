import math

import numpy as np
import pytest
from scipy.special import kl_div

from coshflows.dissipation import (
    contracted_ldp_density,
    dissipation_R,
    dissipation_Rstar_grad,
    edp_functional,
    edp_report,
    free_energy,
    ldp_rate,
)
from coshflows.errors import InvalidArgumentError, InvalidTrajectoryError
from coshflows.graph_system import (
    Trajectory,
    evolve,
    integrate_continuity,
    master_flux,
    random_admissible_trajectory,
)
from coshflows.tilting import Tilt


@pytest.fixture
def relaxation(two_node):
    yield evolve(two_node, [0.9, 0.1], 1.0, np.linspace(0.0, 1.0, 401))


def test_equilibrium_has_zero_dissipation(random_graph):
    pi = random_graph.pi
    assert dissipation_R(random_graph, pi, np.zeros((random_graph.size,) * 2)) == 0.0
    assert dissipation_Rstar_grad(random_graph, None, pi) == pytest.approx(0.0, abs=1e-15)
    assert free_energy(random_graph, None, pi) == pytest.approx(0.0, abs=1e-15)


def test_flux_without_base_has_infinite_cost(two_node):
    j = master_flux(two_node, [1.0, 0.0])
    assert dissipation_R(two_node, [1.0, 0.0], j) == math.inf


def test_dual_dissipation_is_finite_on_the_boundary(two_node):
    # u = (3, 0): Σ k √(π_aπ_b)(√3 − 0)² over both directions
    value = dissipation_Rstar_grad(two_node, None, [1.0, 0.0])
    assert value == pytest.approx(2.0 * math.sqrt(2.0) * math.sqrt(2.0 / 9.0) * 3.0)


def test_free_energy_of_tilt(two_node):
    tilt = Tilt(F=[0.0, 1.0])
    weights = np.array([1 / 3, 2 / 3 * math.exp(-1.0)])
    pi_F = weights / weights.sum()
    assert free_energy(two_node, tilt, pi_F) == pytest.approx(0.0, abs=1e-15)
    assert free_energy(two_node, tilt, two_node.pi) > 0.0


def test_stationary_trajectory_has_zero_edp(random_graph):
    traj = evolve(random_graph, random_graph.pi, 1.0)
    report = edp_functional(random_graph, None, traj)
    assert report.I_T == pytest.approx(0.0, abs=1e-12)


def test_solution_balances_energy_and_dissipation(two_node, relaxation):
    report = edp_functional(two_node, None, relaxation)
    assert report.energy_end < report.energy_start
    assert report.integral_R > 0.0 and report.integral_Rstar > 0.0
    assert abs(report.I_T) < 1e-4


def test_perturbed_trajectory_has_positive_edp(two_node, relaxation):
    fluxes = 1.5 * np.asarray(relaxation.fluxes)
    states = integrate_continuity(relaxation.times, relaxation.states[0], fluxes)
    perturbed = Trajectory(times=relaxation.times, states=states, fluxes=fluxes)
    report = edp_functional(two_node, None, perturbed)
    assert report.I_T > 1e-2


def test_left_rule_is_first_order(two_node):
    errors = []
    for n in (101, 201):
        traj = evolve(two_node, [0.9, 0.1], 1.0, np.linspace(0.0, 1.0, n))
        errors.append(abs(edp_functional(two_node, None, traj, rule="left").I_T))
    assert errors[1] / errors[0] == pytest.approx(0.5, abs=0.05)


def test_trapezoid_rule_is_second_order(two_node):
    errors = []
    for n in (101, 201):
        traj = evolve(two_node, [0.9, 0.1], 1.0, np.linspace(0.0, 1.0, n))
        errors.append(abs(edp_functional(two_node, None, traj, rule="trapezoid").I_T))
    assert errors[1] / errors[0] == pytest.approx(0.25, abs=0.03)


@pytest.mark.parametrize("graph_name", ["two_node", "random_graph"])
@pytest.mark.parametrize("F", [None, "random"])
def test_random_admissible_trajectories_have_non_negative_edp(request, rng, graph_name, F):
    g = request.getfixturevalue(graph_name)
    tilt = None if F is None else Tilt(F=rng.normal(size=g.size))
    times = np.linspace(0.0, 1.0, 201)
    values = []
    for _ in range(100):
        traj = random_admissible_trajectory(g, rng.dirichlet(np.ones(g.size)), times, rng)
        values.append(edp_functional(g, tilt, traj).I_T)
    assert min(values) >= -1e-9


def test_edp_needs_fluxes(two_node):
    traj = evolve(two_node, [0.9, 0.1], 1.0, with_fluxes=False)
    with pytest.raises(InvalidTrajectoryError):
        edp_functional(two_node, None, traj)


def test_edp_rejects_broken_continuity(two_node):
    traj = evolve(two_node, [0.9, 0.1], 1.0)
    broken = Trajectory(times=traj.times, states=traj.states, fluxes=np.zeros_like(traj.fluxes))
    with pytest.raises(InvalidTrajectoryError):
        edp_functional(two_node, None, broken)


def test_edp_report_components():
    report = edp_report([0.0, 1.0], [2.0, 1.0], [0.5, 0.5], [0.25, 0.75], tol=1e-6)
    assert report.integral_R == 0.5
    assert report.integral_Rstar == 0.5
    assert report.I_T == 0.0
    assert report.expected_order == 2


def test_typical_path_has_zero_rate(two_node):
    times = np.linspace(0.0, 1.0, 401)
    traj = evolve(two_node, [0.9, 0.1], 1.0, times, with_fluxes=False)
    one_way = traj.states[:, :, None] * two_node.kappa
    assert ldp_rate(two_node, times, traj.states, one_way) == pytest.approx(0.0, abs=1e-12)


def test_atypical_path_has_positive_rate(two_node):
    times = np.linspace(0.0, 1.0, 401)
    traj = evolve(two_node, [0.9, 0.1], 1.0, times, with_fluxes=False)
    one_way = traj.states[:, :, None] * two_node.kappa
    # equal extra traffic in both directions keeps continuity
    busy = one_way + 0.2 * (two_node.kappa > 0)
    assert ldp_rate(two_node, times, traj.states, busy) > 0.0


def test_path_violating_continuity_has_infinite_rate(two_node):
    times = np.linspace(0.0, 1.0, 11)
    states = np.tile([0.5, 0.5], (11, 1))
    one_way = np.zeros((11, 2, 2))
    one_way[:, 0, 1] = 1.0
    assert ldp_rate(two_node, times, states, one_way) == math.inf


def test_contraction_vanishes_at_typical_flux(random_graph, rng):
    rho = rng.uniform(0.1, 1.0, random_graph.size)
    j = master_flux(random_graph, rho)
    assert contracted_ldp_density(random_graph, rho, j) == pytest.approx(0.0, abs=1e-10)
    assert contracted_ldp_density(random_graph, rho, 2.0 * j) > 0.0


@pytest.fixture
def interval_times():
    yield np.linspace(0.0, 1.0, 11)


def test_stationary_interval_fluxes_have_zero_rate(two_node, interval_times):
    states = np.tile(two_node.pi, (11, 1))
    one_way = np.broadcast_to(two_node.pi[:, None] * two_node.kappa, (10, 2, 2))
    assert ldp_rate(two_node, interval_times, states, one_way) == pytest.approx(0.0, abs=1e-15)


def test_interval_fluxes_rebuilt_by_continuity(two_node, interval_times):
    one_way = np.zeros((10, 2, 2))
    one_way[:, 0, 1] = 0.3
    one_way[:, 1, 0] = 0.1
    states = integrate_continuity(interval_times, [0.6, 0.4], one_way)
    np.testing.assert_allclose(states[-1], [0.4, 0.6])
    # constant mean state per interval against the rebuilt path
    mean = 0.5 * (states[1:] + states[:-1])
    expected = np.sum(0.1 * kl_div(one_way, mean[:, :, None] * two_node.kappa))
    assert ldp_rate(two_node, interval_times, states, one_way) == pytest.approx(expected)


def test_interval_fluxes_violating_continuity(two_node, interval_times):
    states = np.tile([0.5, 0.5], (11, 1))
    one_way = np.zeros((10, 2, 2))
    one_way[:, 0, 1] = 1.0
    assert ldp_rate(two_node, interval_times, states, one_way) == math.inf


@pytest.mark.parametrize("n_fluxes", [3, 12])
def test_flux_path_length_must_match_grid(two_node, interval_times, n_fluxes):
    states = np.tile([0.5, 0.5], (11, 1))
    with pytest.raises(InvalidArgumentError):
        ldp_rate(two_node, interval_times, states, np.zeros((n_fluxes, 2, 2)))
