import networkx as nx
import numpy as np
import pytest

from swmatch._blossom import max_weight_matching


def _nx_weight(w):
    G = nx.Graph()
    n = len(w)
    G.add_nodes_from(range(n))
    for i in range(n):
        for j in range(i + 1, n):
            if w[i, j]:
                G.add_edge(i, j, weight=int(w[i, j]))
    M = nx.max_weight_matching(G)
    return sum(int(w[a, b]) for a, b in M)


def _check(w, mate):
    n = len(w)
    total = 0
    for i in range(n):
        j = mate[i]
        if j >= 0:
            assert mate[j] == i and w[i, j] > 0
            if i < j:
                total += int(w[i, j])
    return total


@pytest.mark.parametrize("seed", range(6))
def test_random_graphs_against_networkx(seed):
    rng = np.random.default_rng(seed)
    for _ in range(100):
        n = int(rng.integers(1, 14))
        w = rng.integers(1, 50, size=(n, n)) * (rng.random((n, n)) < rng.uniform(0.2, 1.0))
        w = np.triu(w, 1)
        w = (w + w.T).astype(np.int64)
        mate = max_weight_matching(w)
        assert _check(w, mate) == _nx_weight(w)


def test_large_weights():
    rng = np.random.default_rng(1)
    n = 10
    w = np.triu(rng.integers(1 << 40, 1 << 50, size=(n, n)), 1)
    w = (w + w.T).astype(np.int64)
    assert _check(w, max_weight_matching(w)) == _nx_weight(w)


def test_trivial():
    assert list(max_weight_matching(np.zeros((0, 0), dtype=np.int64))) == []
    assert list(max_weight_matching(np.zeros((3, 3), dtype=np.int64))) == [-1, -1, -1]
    w = np.array([[0, 5], [5, 0]], dtype=np.int64)
    assert list(max_weight_matching(w)) == [1, 0]
