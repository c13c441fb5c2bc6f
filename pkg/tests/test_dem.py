import math

import networkx as nx
import numpy as np
import pytest

from conftest import setup
from swmatch.dem import (
    DecodingGraph,
    DecompositionError,
    DetectorErrorModel,
    FaultMechanism,
    ModelError,
    _decompose,
    build_z_graph,
    extract_dem,
    weighted_buffer_size,
    xor_merge,
)
from swmatch.frame_sim import find_component, inject, sample_batch


def test_noiseless_dem_is_empty():
    circuit, dem, _ = setup(3, 4, 0.0)
    assert dem.mechanisms == []
    assert dem.dump() == ""


def test_xor_merge():
    p = 0.013
    assert xor_merge(p, p) == pytest.approx(2 * p * (1 - p), rel=1e-15)
    assert xor_merge(p, 0.0) == p


def test_mechanism_invariants(d3):
    _, dem, _ = d3
    for m in dem.mechanisms:
        assert 0 < m.probability < 0.5
        for fp in (m.z_footprint, m.x_footprint):
            assert list(fp) == sorted(set(fp))
        assert m.z_footprint or m.x_footprint


def test_measurement_flip_mechanism():
    circuit, dem, _ = setup(3, 4, 0.002)
    idx = dem.indexing
    anc = circuit.layout.z_stabilizers[2].qubit
    steps = [t for t, st in enumerate(circuit.timesteps) if any(op.kind == "MZ" and op.qubits == (anc,) for op in st)]
    r = 2
    comp = find_component(circuit, steps[r], "MZ", (anc,), "M")
    mech = dem.mechanisms[int(dem.component_to_mechanism[comp])]
    assert mech.z_footprint == (idx.z_id(r, 2), idx.z_id(r + 1, 2))
    assert mech.observable_flip == 0
    assert mech.x_footprint == ()


def test_dem_reproduces_injected_faults(d3):
    circuit, dem, _ = d3
    rng = np.random.default_rng(5)
    ncomp = len(dem.component_to_mechanism)
    for _ in range(200):
        comps = rng.choice(ncomp, size=3, replace=False)
        s = inject(circuit, comps, dem)
        z = np.zeros(dem.indexing.num_detectors, dtype=np.uint8)
        obs = 0
        for c in comps:
            m = int(dem.component_to_mechanism[c])
            if m < 0:
                continue
            mech = dem.mechanisms[m]
            z[list(mech.z_footprint + mech.x_footprint)] ^= 1
            obs ^= mech.observable_flip
        assert np.array_equal(z, s.detectors) and obs == s.observable_flip


def test_edges_are_distinct_z_footprints(d3):
    _, dem, g = d3
    merged = {}
    for m in dem.mechanisms:
        if m.z_footprint:
            assert len(m.z_footprint) <= 2
            key = (m.z_footprint, m.observable_flip)
            merged[key] = xor_merge(merged.get(key, 0.0), m.probability)
    assert g.num_edges == len(merged)
    B = g.boundary
    for e in range(g.num_edges):
        fp = (int(g.u[e]),) if g.v[e] == B else (int(g.u[e]), int(g.v[e]))
        assert g.probability[e] == pytest.approx(merged[(fp, int(g.flag[e]))], rel=1e-12)
    assert np.allclose(g.weight, np.log((1 - g.probability) / g.probability))


def test_graph_invariants(d3):
    _, _, g = d3
    assert (g.weight > 0).all() and g.w_min > 0
    B = g.boundary
    touched = np.zeros(B + 1, dtype=bool)
    touched[g.u] = touched[g.v] = True
    assert touched[:B].all()
    G = nx.Graph()
    G.add_edges_from(zip(g.u.tolist(), g.v.tolist()))
    assert nx.is_connected(G)
    real_v = np.where(g.v == B, g.u, g.v)
    assert np.array_equal(g.layer, np.minimum(g.u, real_v) // g.nz)


def test_degree_independent_of_rounds():
    assert setup(3, 10, 0.003)[2].max_degree == setup(3, 20, 0.003)[2].max_degree


@pytest.mark.parametrize("d", [3, 5])
def test_code_distance(d):
    """Lightest odd-flag boundary-to-boundary path has d edges."""
    _, _, g = setup(d, d, 0.003)
    B = g.boundary
    # doubled graph: (node, parity)
    G = nx.Graph()
    for a, b, f in zip(g.u.tolist(), g.v.tolist(), g.flag.tolist()):
        for par in (0, 1):
            G.add_edge((a, par), (b, par ^ f))
    assert nx.shortest_path_length(G, (B, 0), (B, 1)) == d


def test_logical_edges_touch_the_logical_column(d3):
    circuit, _, g = d3
    lay = circuit.layout
    near = {k for k, s in enumerate(lay.z_stabilizers) if set(s.support) & lay.z_logical_support}
    flagged = np.flatnonzero(g.flag)
    assert len(flagged)
    B = g.boundary
    for e in flagged:
        ends = [int(g.u[e])] + ([] if g.v[e] == B else [int(g.v[e])])
        assert any(x % g.nz in near for x in ends)


def _synthetic_dem(mechs):
    _, dem, _ = setup(3, 1, 0.001)
    ms = [FaultMechanism(i, p, zf, (), f, (0, "test", "X")) for i, (zf, f, p) in enumerate(mechs)]
    return DetectorErrorModel(ms, dem.indexing, np.full(0, -1))


def _full_cover(n, extra=()):
    # one boundary edge per detector keeps every node touched and the graph connected
    return [((i,), 0, 0.01) for i in range(n)] + list(extra)


def test_decompose_direct():
    known = [(0, 1, 0), (2, 3, 1), (0, 2, 0), (1, -1, 1)]
    incident = {}
    for k in known:
        incident.setdefault(k[0], []).append(k)
        if k[1] != -1:
            incident.setdefault(k[1], []).append(k)
    parts = _decompose((0, 1, 2, 3), 1, incident, dict.fromkeys(known))
    assert parts is not None and len(parts) == 2
    fp = set()
    for a, b, _ in parts:
        fp ^= {a} | ({b} if b != -1 else set())
    assert fp == {0, 1, 2, 3}
    assert sum(k[2] for k in parts) % 2 == 1


def test_hyperedge_decomposition_in_graph():
    dem = _synthetic_dem(_full_cover(8, [((0, 1), 0, 0.02), ((2, 3), 1, 0.03), ((0, 1, 2, 3), 1, 0.001)]))
    g = build_z_graph(dem)
    parts = g.mechanism_edges(len(dem.mechanisms) - 1)
    assert len(parts) == 2
    assert sorted(g.boundary_of(parts).tolist()) == [0, 1, 2, 3]
    assert int(g.flag[parts].sum()) % 2 == 1
    e01 = parts[g.u[parts] == 0][0]
    assert g.probability[e01] == pytest.approx(xor_merge(0.02, 0.001))


def test_undecomposable_hyperedge_raises():
    # every known edge has flag 0, so an odd flag cannot be assembled
    dem = _synthetic_dem(_full_cover(8, [((0, 1, 2, 3), 1, 0.001)]))
    with pytest.raises(DecompositionError):
        build_z_graph(dem)


def test_undetectable_logical_raises():
    dem = _synthetic_dem(_full_cover(8, [((), 1, 0.001)]))
    with pytest.raises(ModelError):
        build_z_graph(dem)


def test_mean_event_density_matches_sampler():
    circuit, dem, g = setup(3, 3, 0.003)
    n = g.num_nodes
    # exact odd-parity marginal per detector under independent mechanisms
    prod = np.ones(n)
    for m in dem.mechanisms:
        for x in m.z_footprint:
            prod[x] *= 1 - 2 * m.probability
    predicted = ((1 - prod) / 2).mean()
    shots = 100_000
    z = sample_batch(circuit, shots, 0, dem).detectors[:, :n]
    observed = z.mean()
    sigma = math.sqrt(predicted * (1 - predicted) / (shots * n))
    assert abs(observed - predicted) < 3 * sigma


def test_mechanism_sampling_matches_frame_marginals():
    circuit, dem, _ = setup(3, 5, 0.003)
    shots = 100_000
    nd = dem.indexing.num_detectors
    rng = np.random.default_rng(1)
    fp = np.zeros((len(dem.mechanisms), nd), dtype=np.uint8)
    for m in dem.mechanisms:
        fp[m.id, list(m.z_footprint + m.x_footprint)] = 1
    counts = np.zeros(nd)
    for _ in range(10):
        fire = (rng.random((shots // 10, len(dem.mechanisms))) < [m.probability for m in dem.mechanisms])
        counts += ((fire.astype(np.int64) @ fp) % 2).sum(axis=0)
    via_dem = counts / shots
    via_frames = sample_batch(circuit, shots, 3, dem).detectors.mean(axis=0)
    pooled = (via_dem + via_frames) / 2
    sigma = np.sqrt(2 * pooled * (1 - pooled) / shots)
    assert np.all(np.abs(via_dem - via_frames) < 4 * sigma)
    assert np.mean(np.abs(via_dem - via_frames) < 3 * sigma) > 0.97


def _chain_graph(N, w_v=0.7, w_b=9.0):
    """One detector per layer: vertical edges plus heavy boundary edges."""
    n = N + 1
    u = list(range(N)) + list(range(n))
    v = list(range(1, n)) + [n] * n
    w = np.array([w_v] * N + [w_b] * n)
    p = 1 / (1 + np.exp(w))
    return DecodingGraph(n, 1, N, np.array(u), np.array(v), p, w, np.zeros(len(u), np.uint8),
                         np.minimum(np.array(u), np.array([x if x < n else 10**9 for x in v])),
                         np.zeros(1, np.int64), np.zeros(0, np.int64))


@pytest.mark.parametrize("b", [1, 2, 3, 5])
def test_buffer_size_uniform_vertical(b):
    g = _chain_graph(20)
    # core [4, 10): upper seam is layer 10, the open side b rounds later
    assert weighted_buffer_size(g, 10, (4, 10 + b)) == pytest.approx(b * 0.7)
    assert weighted_buffer_size(g, 5, (6 - b, 12)) == pytest.approx(b * 0.7)


def test_buffer_size_edge_cases():
    g = _chain_graph(20)
    assert weighted_buffer_size(g, 10, (4, 10)) == 0.0
    assert weighted_buffer_size(g, 3, (4, 10)) == 0.0
    assert weighted_buffer_size(g, 5, (0, 20)) == math.inf
    with pytest.raises(ValueError):
        weighted_buffer_size(g, 15, (4, 10))
    with pytest.raises(ValueError):
        weighted_buffer_size(g, 5, (6, 6))


def _buffer_oracle(g, seam, start, stop):
    rnd = np.minimum(np.arange(g.num_nodes) // g.nz, g.num_rounds - 1)
    inside = (rnd >= start) & (rnd < stop)
    G = nx.Graph()
    for a, b, w in zip(g.u.tolist(), g.v.tolist(), g.weight.tolist()):
        if b == g.boundary:
            continue
        ia, ib = inside[a], inside[b]
        if ia and ib:
            G.add_edge(a, b, weight=w)
        elif ia or ib:
            real, out = (a, b) if ia else (b, a)
            G.add_edge(real, "open", weight=w)
    for x in np.flatnonzero(inside & (np.arange(g.num_nodes) // g.nz == seam)):
        G.add_edge("seam", int(x), weight=0.0)
    return nx.shortest_path_length(G, "seam", "open", weight="weight")


@pytest.mark.parametrize("seam,window", [(5, (3, 9)), (3, (0, 6)), (2, (2, 9)), (6, (0, 9)), (4, (1, 9))])
def test_buffer_size_against_exhaustive_search(seam, window):
    _, _, g = setup(3, 9, 0.003)
    ours = weighted_buffer_size(g, seam, window)
    if window == (0, 9):
        assert ours == math.inf
    else:
        assert ours == pytest.approx(_buffer_oracle(g, seam, *window), rel=1e-12)
