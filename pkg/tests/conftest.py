import numpy as np
import pytest

from cellkalman.harness import builtin_complex
from cellkalman.topology import build_complex, enumerate_candidate_cells

TRIANGLE_EDGES = [(0, 1), (1, 2), (0, 2)]
TRIANGLE_FACE = [1, 2, -3]          # walk 0 -> 1 -> 2 -> 0

K4_EDGES = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]

SQUARE_EDGES = [(0, 1), (1, 2), (2, 3), (0, 3)]


@pytest.fixture
def triangle_cc():
    return build_complex(TRIANGLE_EDGES, [TRIANGLE_FACE])


@pytest.fixture
def edge_cc():
    return build_complex([(0, 1)])


@pytest.fixture
def builtin_cc():
    return builtin_complex()


def random_complex(rng, n_nodes=None, extra_edges=3, max_cycle_len=5):
    """A random connected 1-skeleton with its enumerated candidate pool."""
    if n_nodes is None:
        n_nodes = int(rng.integers(4, 8))
    edges = set()
    order = rng.permutation(n_nodes)
    for a, b in zip(order, order[1:]):              # spanning tree
        edges.add((min(a, b), max(a, b)))
    tries = 0
    while len(edges) < n_nodes - 1 + extra_edges and tries < 100:
        u, v = rng.integers(0, n_nodes, size=2)
        if u != v:
            edges.add((min(u, v), max(u, v)))
        tries += 1
    edge_list = sorted((int(u), int(v)) for u, v in edges)
    cycles = enumerate_candidate_cells(edge_list, max_cycle_len, pool_cap=256)
    return build_complex(edge_list, cycles, n_nodes=n_nodes)


@pytest.fixture
def complex_factory():
    return random_complex


def random_activation(rng, cc):
    return (rng.random(cc.n_faces_pool) < 0.5).astype(np.int64)
