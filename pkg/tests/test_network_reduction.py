import math

import numpy as np
import pytest
from pydantic import ValidationError

from coshflows.errors import InvalidArgumentError
from coshflows.graph_system import MarkovGraph, check_detailed_balance
from coshflows.network_reduction import (
    TwoTerminalNetwork,
    capacity,
    chain_network,
    epsilon_convergence,
    limit_two_state,
    n_chain_conductance,
    pair_conductances,
    reduce_to_capacity,
    scale_fast,
    star_mesh_eliminate,
)


def test_three_chain_capacity(three_chain):
    result = capacity(three_chain)
    assert result.capacity == pytest.approx(0.25)
    np.testing.assert_allclose(result.harmonic_potential, [1.0, 0.5, 0.0])
    assert result.residual < 1e-14
    assert result.terminals_connected


def test_three_chain_conductances():
    # k⁰ = (1/3)/(2/3) per edge in series, against the closed form 2/(1 + 1)
    conductance = n_chain_conductance([1.0, 1.0])
    assert conductance.capacity == pytest.approx(0.25)
    assert conductance.literal_k_chain == pytest.approx(1.0)


def test_six_chain_capacity(six_chain):
    # five edges of k⁰ = 1/2 in series
    assert capacity(six_chain).capacity == pytest.approx(0.1)
    assert reduce_to_capacity(six_chain) == pytest.approx(0.1)


def test_interior_tilt_scales_capacity(three_chain):
    alpha = 1.3
    tilted = capacity(three_chain, [0.0, alpha, 0.0]).capacity
    assert tilted == pytest.approx(0.25 * math.exp(-alpha / 2.0))


def test_constant_tilt_shifts_capacity(random_network):
    c = 0.7
    F = np.full(random_network.graph.size, c)
    assert capacity(random_network, F).capacity == pytest.approx(
        capacity(random_network).capacity * math.exp(-c)
    )


def test_pair_conductances_are_symmetric(random_network):
    k = pair_conductances(random_network, np.linspace(-1.0, 1.0, random_network.graph.size))
    np.testing.assert_allclose(k, k.T)


def test_star_mesh_on_a_star():
    k = np.zeros((4, 4))
    k[3, :3] = k[:3, 3] = 1.0
    reduced = star_mesh_eliminate(k, 3)
    expected = np.full((3, 3), 1.0 / 3.0)
    np.fill_diagonal(expected, 0.0)
    np.testing.assert_allclose(reduced, expected)


def test_elimination_order_does_not_matter(random_network, rng):
    reference = capacity(random_network).capacity
    fast = [random_network.graph.nodes[x] for x in random_network.fast]
    for _ in range(3):
        order = [fast[i] for i in rng.permutation(len(fast))]
        assert reduce_to_capacity(random_network, order=order) == pytest.approx(reference, rel=1e-9)


def test_elimination_order_must_cover_fast_nodes(three_chain):
    with pytest.raises(InvalidArgumentError):
        reduce_to_capacity(three_chain, order=["n0"])


def test_disconnected_terminals_have_zero_capacity():
    kappa = np.zeros((4, 4))
    kappa[0, 2] = kappa[2, 0] = 1.0
    kappa[1, 3] = kappa[3, 1] = 1.0
    graph = MarkovGraph.build(["a", "b", "w", "v"], kappa, np.ones(4))
    network = TwoTerminalNetwork(graph=graph, terminal_a="a", terminal_b="b")
    result = capacity(network)
    assert not result.terminals_connected
    assert result.capacity == 0.0


@pytest.mark.parametrize("terminals", [("n0", "n0"), ("n0", "missing")])
def test_invalid_terminals(three_chain, terminals):
    with pytest.raises(ValidationError):
        TwoTerminalNetwork(graph=three_chain.graph, terminal_a=terminals[0], terminal_b=terminals[1])


@pytest.mark.parametrize("eps", [0.0, -0.1, 1.5])
def test_scale_fast_rejects_eps(three_chain, eps):
    with pytest.raises(InvalidArgumentError):
        scale_fast(three_chain, eps)


def test_scale_fast_keeps_detailed_balance(random_network):
    scaled = scale_fast(random_network, 1e-3)
    assert check_detailed_balance(scaled).holds


def test_limit_two_state_rates(three_chain):
    limit = limit_two_state(three_chain)
    # π⁰ = (1/2, 1/2) and cap = 1/4
    np.testing.assert_allclose(limit.graph.kappa, [[0.0, 0.5], [0.5, 0.0]])
    assert limit.net_flux([1.0, 0.0]) == pytest.approx(0.5)
    assert limit.sigma([0.5, 0.5]) == pytest.approx(0.25)
    np.testing.assert_allclose(limit.transfer_initial([0.0, 1.0, 0.0]), [0.5, 0.5])


def test_epsilon_convergence(three_chain):
    table = epsilon_convergence(three_chain, None, [1.0, 0.0, 0.0], 2.0, [1e-1, 1e-2, 1e-3])
    assert table.columns == ("eps", "sup_error")
    errors = table.column("sup_error")
    assert errors[0] > errors[1] > errors[2]
    assert errors[2] < 1e-2


def test_epsilon_list_must_decrease(three_chain):
    with pytest.raises(InvalidArgumentError):
        epsilon_convergence(three_chain, None, [1.0, 0.0, 0.0], 1.0, [1e-2, 1e-1])


@pytest.mark.parametrize("kappas", [[], [1.0, 0.0], [[1.0]]])
def test_invalid_chain(kappas):
    with pytest.raises(InvalidArgumentError):
        chain_network(kappas)
