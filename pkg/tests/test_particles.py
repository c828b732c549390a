import numpy as np
import pytest

from coshflows.dissipation import ldp_rate
from coshflows.errors import InvalidArgumentError
from coshflows.graph_system import integrate_continuity
from coshflows.particles import gillespie


def test_equal_seeds_give_identical_runs(random_graph):
    first = gillespie(random_graph, 500, 1.0, seed=3)
    second = gillespie(random_graph, 500, 1.0, seed=3)
    np.testing.assert_array_equal(first.occupation, second.occupation)
    np.testing.assert_array_equal(first.jump_counts, second.jump_counts)
    assert first.n_events == second.n_events


def test_occupation_counts_every_particle(random_graph):
    run = gillespie(random_graph, 300, 2.0, seed=1, output_grid=np.linspace(0.0, 2.0, 11))
    np.testing.assert_array_equal(run.occupation.sum(axis=1), 300)
    np.testing.assert_allclose(run.empirical_measure().sum(axis=1), 1.0)
    assert run.interval_jumps.sum() <= run.jump_counts.sum() == run.n_events


def test_initial_distribution_is_respected(two_node):
    run = gillespie(two_node, 1000, 0.5, seed=0, rho0=[1.0, 0.0])
    np.testing.assert_array_equal(run.occupation[0], [1000, 0])


def test_stationary_occupation_within_four_sigma(two_node):
    n = 20_000
    run = gillespie(two_node, n, 2.0, seed=11)
    pi = np.asarray(two_node.pi)
    sigma = np.sqrt(pi * (1.0 - pi) / n)
    assert np.all(np.abs(run.empirical_measure()[-1] - pi) < 4.0 * sigma)


def test_mean_one_way_flux_matches_equilibrium_flux(two_node):
    run = gillespie(two_node, 20_000, 2.0, seed=5)
    # π_aκ_ab = π_bκ_ba = 2/3
    flux = run.mean_one_way_flux()
    assert flux[0, 1] == pytest.approx(2 / 3, rel=0.05)
    assert flux[1, 0] == pytest.approx(2 / 3, rel=0.05)


def test_one_way_flux_path_shape(two_node):
    run = gillespie(two_node, 100, 1.0, seed=2, output_grid=np.linspace(0.0, 1.0, 6))
    assert run.one_way_flux_path().shape == (5, 2, 2)


def test_empirical_path_is_typical(two_node):
    grid = np.linspace(0.0, 2.0, 21)
    run = gillespie(two_node, 20_000, 2.0, seed=5, output_grid=grid)
    empirical = run.empirical_measure()
    one_way = run.one_way_flux_path()
    typical = ldp_rate(two_node, grid, empirical, one_way)
    slowed = 0.5 * one_way
    states = np.maximum(integrate_continuity(grid, empirical[0], slowed), 0.0)
    assert 0.0 <= typical < 1e-2
    assert ldp_rate(two_node, grid, states, slowed) > 0.1


@pytest.mark.parametrize(
    "kwargs",
    [
        {"n_particles": 0, "T": 1.0},
        {"n_particles": 10, "T": 0.0},
        {"n_particles": 10, "T": 1.0, "rho0": [-1.0, 2.0]},
        {"n_particles": 10, "T": 1.0, "rho0": [1.0, 0.0, 0.0]},
    ],
)
def test_invalid_runs(two_node, kwargs):
    with pytest.raises(InvalidArgumentError):
        gillespie(two_node, seed=0, **kwargs)
