import numpy as np
import pytest

from ganattack.graph import graph_from_edges
from ganattack.synthetic import two_cluster_graph


def path_graph(n, attributes=None, labels=None):
    return graph_from_edges(n, [(i, i + 1) for i in range(n - 1)], attributes, labels)


def star_graph(leaves):
    return graph_from_edges(leaves + 1, [(0, i) for i in range(1, leaves + 1)])


def random_graph(n, p, rng, d=4, labels=None, kind="binary"):
    upper = np.triu(rng.random((n, n)) < p, 1)
    if kind == "binary":
        x = (rng.random((n, d)) < 0.5).astype(float)
    else:
        x = rng.normal(size=(n, d))
    return graph_from_edges(n, np.argwhere(upper), x, labels, kind)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def toy_graph():
    return two_cluster_graph(20, seed=0)
