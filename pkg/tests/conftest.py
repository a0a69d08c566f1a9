"""Shared fixtures: small deterministic graphs used across the suite."""

import numpy as np
import pytest

from trigad.graph import Graph, build_adjacency, make_graph


@pytest.fixture
def single_edge():
    """Two nodes, one edge, orthogonal attributes."""
    return make_graph(2, [(0, 1)], np.array([[1.0, 0.0], [0.0, 1.0]]))


@pytest.fixture
def path3():
    """Path 0-1-2 with scalar attributes 1, 2, 3."""
    return make_graph(3, [(0, 1), (1, 2)], np.array([[1.0], [2.0], [3.0]]))


@pytest.fixture
def triangle():
    return make_graph(3, [(0, 1), (1, 2), (0, 2)],
                      np.array([[1.0], [2.0], [3.0]]))


@pytest.fixture
def fixture8():
    """8 nodes, mixed degrees, deterministic random attributes."""
    edges = [(0, 1), (0, 2), (1, 2), (2, 3), (3, 4), (3, 5), (4, 5),
             (5, 6), (6, 7), (4, 7)]
    rng = np.random.default_rng(7)
    return make_graph(8, edges, rng.normal(size=(8, 5)))


@pytest.fixture
def star5():
    """Star with center 0 and four leaves."""
    return make_graph(5, [(0, i) for i in range(1, 5)],
                      np.arange(10.0).reshape(5, 2))


def random_graph(n, p, seed, d=3, ensure_edge=True):
    """Erdos-Renyi helper for property tests (not a fixture: parameterized)."""
    rng = np.random.default_rng(seed)
    upper = rng.random((n, n)) < p
    edges = [(i, j) for i in range(n) for j in range(i + 1, n) if upper[i, j]]
    if ensure_edge and not edges:
        edges = [(0, 1)]
    return make_graph(n, edges, rng.normal(size=(n, d)))
