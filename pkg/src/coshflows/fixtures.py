"""Bundled input fixtures.

Each fixture is stored as its JSON schema object, so ``coshflows fixtures
--dump`` writes exactly what a config file may reference with
``fixture:<name>``.
"""

import logging
from typing import Callable, NamedTuple

import numpy as np

from coshflows.errors import InvalidArgumentError
from coshflows.network_reduction import chain_network
from coshflows.schemas import (
    GraphSpec,
    InputSpec,
    KramersSpec,
    MembraneSpec,
    PotentialSpec,
    ReactionEntry,
    ReactionSpec,
)

logger = logging.getLogger(__name__)

RANDOM_NETWORK_SEED = 7


class Fixture(NamedTuple):
    name: str
    description: str
    build: Callable[[], InputSpec]


def _two_node() -> GraphSpec:
    # π_aκ_ab = π_bκ_ba = 2/3
    return GraphSpec(
        nodes=["a", "b"],
        pi=[1 / 3, 2 / 3],
        kappa=[("a", "b", 2.0), ("b", "a", 1.0)],
        terminals=("a", "b"),
    )


def _chain(n_nodes: int) -> GraphSpec:
    network = chain_network(np.ones(n_nodes - 1))
    return GraphSpec.from_graph(network.graph, (network.terminal_a, network.terminal_b))


def _random_network(n_nodes: int = 5, seed: int = RANDOM_NETWORK_SEED) -> GraphSpec:
    """Connected detailed-balance network from symmetric conductances."""
    rng = np.random.default_rng(seed)
    pi = rng.uniform(0.5, 1.5, n_nodes)
    pi /= pi.sum()
    conductance = np.zeros((n_nodes, n_nodes))
    for x in range(n_nodes):
        for y in range(x + 1, n_nodes):
            if y == x + 1 or rng.random() < 0.6:
                conductance[x, y] = conductance[y, x] = rng.uniform(0.2, 2.0)
    nodes = [f"n{i}" for i in range(n_nodes)]
    rates = [
        (nodes[x], nodes[y], float(conductance[x, y] / pi[x]))
        for x, y in zip(*np.nonzero(conductance))
    ]
    return GraphSpec(nodes=nodes, pi=pi.tolist(), kappa=rates, terminals=(nodes[0], nodes[-1]))


def _quartic_double_well() -> KramersSpec:
    return KramersSpec(H=PotentialSpec(name="quartic_double_well"), eps=0.1)


def _membrane_default() -> MembraneSpec:
    return MembraneSpec(a_star=PotentialSpec(name="constant", params={"value": 0.5}), eps=0.1)


def _a_to_b() -> ReactionSpec:
    return ReactionSpec(
        species=["A", "B"],
        energies=[0.0, 0.5],
        reactions=[ReactionEntry(alpha={"A": 1}, beta={"B": 1}, D=1.0, E_act=1.0)],
    )


def _binding() -> ReactionSpec:
    return ReactionSpec(
        species=["A", "B", "C"],
        energies=[0.0, 0.0, 0.0],
        reactions=[ReactionEntry(alpha={"A": 1, "B": 1}, beta={"C": 1})],
    )


FIXTURES: dict[str, Fixture] = {
    fixture.name: fixture
    for fixture in (
        Fixture("two-node", "two states a, b with pi = (1/3, 2/3)", _two_node),
        Fixture("3-chain", "uniform 3-chain, unit rates, terminals at the ends", lambda: _chain(3)),
        Fixture("6-chain", "uniform N-chain with N = 6 and unit rates", lambda: _chain(6)),
        Fixture("5-node-random", f"random connected network, seed {RANDOM_NETWORK_SEED}", _random_network),
        Fixture("quartic-double-well", "H(y) = (1 - y^2)^2 on [-2, 2]", _quartic_double_well),
        Fixture("membrane-default", "unit bulk mobilities, membrane mobility 1/2", _membrane_default),
        Fixture("A<->B", "monomolecular isomerization", _a_to_b),
        Fixture("A+B<->C", "binding reaction with unit rate", _binding),
    )
}


def list_fixtures() -> list[tuple[str, str, str]]:
    """(name, schema, description) for every bundled fixture."""
    return [
        (fixture.name, type(fixture.build()).__name__, fixture.description)
        for fixture in FIXTURES.values()
    ]


def load_fixture(name: str) -> InputSpec:
    try:
        fixture = FIXTURES[name]
    except KeyError:
        raise InvalidArgumentError(
            f"unknown fixture {name!r}; available: {', '.join(FIXTURES)}"
        ) from None
    logger.debug("loading fixture %s", name)
    return fixture.build()


def fixture_filename(name: str) -> str:
    return name.replace("<->", "_eq_").replace("+", "_") + ".json"
