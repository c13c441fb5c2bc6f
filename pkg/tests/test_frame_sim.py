import numpy as np
import pytest

from conftest import setup
from swmatch.frame_sim import (
    build_indexing,
    detector_grid,
    detector_grids,
    find_component,
    inject,
    sample,
    sample_batch,
)


def _z_plaquettes_of(layout, q):
    return sorted(k for k, s in enumerate(layout.z_stabilizers) if q in s.support)


@pytest.mark.parametrize("d,N", [(3, 1), (3, 4), (5, 3)])
def test_detector_counts(d, N):
    circuit, _, _ = setup(d, N, 0.001)
    idx = build_indexing(circuit)
    half = (d * d - 1) // 2
    assert idx.num_z == (N + 1) * half
    assert int((idx.basis == 1).sum()) == (N - 1) * half
    assert idx.num_detectors == N * (d * d - 1)


def test_noiseless_is_silent():
    circuit, dem, _ = setup(3, 5, 0.0)
    for seed in range(5):
        s = sample(circuit, seed, dem)
        assert not s.detectors.any()
        assert s.observable_flip == 0
        assert s.triggered_faults == []
    b = sample_batch(circuit, 200, 7, dem)
    assert not b.detectors.any() and not b.observable.any()


def test_bulk_data_x_fault_flips_two_z_detectors():
    circuit, dem, _ = setup(3, 3, 0.001)
    lay = circuit.layout
    idx = dem.indexing
    q = 4  # centre data qubit
    # idle during the round-0 measurement step: after round 0, before round 1
    step = next(t for t, st in enumerate(circuit.timesteps) if any(op.kind == "MZ" for op in st))
    comp = find_component(circuit, step, "I", (q,), "X")
    s = inject(circuit, [comp], dem)
    fired = np.flatnonzero(s.detectors[: idx.num_z])
    assert len(fired) == 2
    assert set(idx.layer[fired]) == {1}
    assert sorted(idx.stabilizer[fired]) == _z_plaquettes_of(lay, q)
    assert s.observable_flip == 0


@pytest.mark.parametrize("r", [0, 1, 2])
def test_z_measurement_flip_footprint(r):
    circuit, dem, _ = setup(3, 3, 0.001)
    idx = dem.indexing
    anc = circuit.layout.z_stabilizers[1].qubit
    steps = [t for t, st in enumerate(circuit.timesteps) if any(op.kind == "MZ" and op.qubits == (anc,) for op in st)]
    comp = find_component(circuit, steps[r], "MZ", (anc,), "M")
    s = inject(circuit, [comp], dem)
    fired = np.flatnonzero(s.detectors)
    assert sorted(idx.layer[fired]) == [r, r + 1]
    assert set(idx.stabilizer[fired]) == {1} and set(idx.basis[fired]) == {0}
    assert s.observable_flip == 0


def test_footprint_closure(d3):
    circuit, dem, _ = d3
    b = sample_batch(circuit, 10_000, 11, dem)
    nz = dem.indexing.num_z
    for i in range(b.num_shots):
        z = np.zeros(nz, dtype=np.uint8)
        x = np.zeros(dem.indexing.num_detectors - nz, dtype=np.uint8)
        obs = 0
        for f in b.faults(i):
            m = dem.mechanisms[f]
            z[list(m.z_footprint)] ^= 1
            x[[k - nz for k in m.x_footprint]] ^= 1
            obs ^= m.observable_flip
        assert np.array_equal(z, b.detectors[i, :nz])
        assert np.array_equal(x, b.detectors[i, nz:])
        assert obs == b.observable[i]


def test_sampling_is_reproducible_and_shot_addressable(d3):
    circuit, dem, _ = d3
    a = sample_batch(circuit, 300, 42, dem)
    b = sample_batch(circuit, 300, 42, dem)
    assert np.array_equal(a.detectors, b.detectors)
    assert np.array_equal(a.fault_ids, b.fault_ids)
    # shot i of a batch starting at seed s is the single shot with seed s + i
    s = sample(circuit, 42 + 17, dem)
    assert np.array_equal(s.detectors, a.detectors[17])
    tail = sample_batch(circuit, 100, 242, dem)
    assert np.array_equal(tail.detectors, a.detectors[200:])


def test_event_density_increases_with_p():
    dens = []
    for p in (0.001, 0.002, 0.003, 0.004, 0.005):
        circuit, dem, _ = setup(3, 9, p)
        dens.append(sample_batch(circuit, 10_000, 0, dem).detectors.mean())
    assert all(a < b for a, b in zip(dens, dens[1:]))


def test_detector_grid():
    circuit, dem, _ = setup(3, 5, 0.001)
    idx = dem.indexing
    zero = sample(setup(3, 5, 0.0)[0], 0)
    assert not detector_grid(zero, idx, 3).any()
    k = int(np.flatnonzero((idx.layer == 3) & (idx.grid_pos[:, 0] == 2) & (idx.grid_pos[:, 1] == 1))[0])
    one = zero.detectors.copy()
    one[k] = 1
    zero.detectors = one
    g = detector_grid(zero, idx, 3)
    assert g.shape == (4, 4) and g.sum() == 1 and g[2, 1] == 1
    with pytest.raises(IndexError):
        detector_grid(zero, idx, 6)


def test_grid_popcount_matches_layer_counts(d3):
    circuit, dem, _ = d3
    idx = dem.indexing
    b = sample_batch(circuit, 500, 3, dem)
    grids = detector_grids(b.detectors, idx)
    for layer in range(idx.num_rounds + 1):
        assert np.array_equal(grids[:, layer].sum(axis=(1, 2)), b.detectors[:, idx.layer == layer].sum(axis=1))
