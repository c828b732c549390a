import numpy as np
import pytest

from coshflows.fixtures import load_fixture
from coshflows.graph_system import MarkovGraph
from coshflows.network_reduction import chain_network


@pytest.fixture
def rng():
    yield np.random.default_rng(20240901)


@pytest.fixture
def two_node():
    # π = (1/3, 2/3), κ_ab = 2, κ_ba = 1
    yield load_fixture("two-node").to_graph()


@pytest.fixture
def symmetric_pair():
    yield MarkovGraph.build(["a", "b"], [[0.0, 1.0], [1.0, 0.0]], [0.5, 0.5])


@pytest.fixture
def random_graph():
    yield load_fixture("5-node-random").to_graph()


@pytest.fixture
def random_network():
    yield load_fixture("5-node-random").to_network()


@pytest.fixture
def three_chain():
    yield chain_network([1.0, 1.0])


@pytest.fixture
def six_chain():
    yield chain_network(np.ones(5))


@pytest.fixture
def isomerization():
    yield load_fixture("A<->B").to_network()


@pytest.fixture
def binding():
    yield load_fixture("A+B<->C").to_network()


@pytest.fixture
def output_dir(tmp_path):
    out = tmp_path / "out"
    yield out
