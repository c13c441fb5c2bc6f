"""Pauli-frame sampling of detector events and ground-truth faults.

Shots are seeded individually (``seed + shot_index`` keys a Philox generator),
so any shot can be regenerated alone and batches may be split arbitrarily.
The frame itself is propagated bit-packed, 64 shots per machine word.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass, field

import numpy as np

from .code_model import Circuit

# Pauli letters as (x, z) bits
_PAULI_BITS = {"I": (0, 0), "X": (1, 0), "Y": (1, 1), "Z": (0, 1)}
_TWO_QUBIT_PAULIS = [a + b for a in "IXYZ" for b in "IXYZ" if a + b != "II"]


@dataclass(frozen=True)
class DetectorIndexing:
    """Detector metadata. Z detectors come first (id = layer * nz + k), then X detectors."""

    num_rounds: int
    nz: int
    nx: int
    layer: np.ndarray
    basis: np.ndarray  # 0 = Z, 1 = X
    stabilizer: np.ndarray  # index within its basis
    grid_pos: np.ndarray  # (num_detectors, 2)
    records: tuple[tuple[int, ...], ...]
    observable_records: tuple[int, ...]

    @property
    def num_detectors(self) -> int:
        return len(self.layer)

    @property
    def num_z(self) -> int:
        return (self.num_rounds + 1) * self.nz

    def z_id(self, layer: int, k: int) -> int:
        return layer * self.nz + k

    def x_id(self, layer: int, k: int) -> int:
        return self.num_z + (layer - 1) * self.nx + k


def build_indexing(circuit: Circuit) -> DetectorIndexing:
    lay = circuit.layout
    n = circuit.num_rounds
    nz, nx = len(lay.z_stabilizers), len(lay.x_stabilizers)
    layer, basis, stab, pos, recs = [], [], [], [], []
    anc = circuit.ancilla_records

    for ell in range(n + 1):
        for k, s in enumerate(lay.z_stabilizers):
            if ell == 0:
                r = (anc[0][s.qubit],)
            elif ell < n:
                r = (anc[ell - 1][s.qubit], anc[ell][s.qubit])
            else:
                r = (anc[n - 1][s.qubit],) + tuple(circuit.data_records[q] for q in s.support)
            layer.append(ell)
            basis.append(0)
            stab.append(k)
            pos.append(s.grid_pos)
            recs.append(r)
    for ell in range(1, n):
        for k, s in enumerate(lay.x_stabilizers):
            layer.append(ell)
            basis.append(1)
            stab.append(k)
            pos.append(s.grid_pos)
            recs.append((anc[ell - 1][s.qubit], anc[ell][s.qubit]))

    obs = tuple(circuit.data_records[q] for q in sorted(lay.z_logical_support))
    return DetectorIndexing(
        num_rounds=n,
        nz=nz,
        nx=nx,
        layer=np.array(layer, dtype=np.int64),
        basis=np.array(basis, dtype=np.int8),
        stabilizer=np.array(stab, dtype=np.int64),
        grid_pos=np.array(pos, dtype=np.int64).reshape(-1, 2),
        records=tuple(recs),
        observable_records=obs,
    )


@dataclass(frozen=True)
class NoiseChannel:
    timestep: int
    op_index: int
    kind: str  # XFLIP (after RZ), ZFLIP (after RX), MFLIP, DEP1, DEP2
    qubits: tuple[int, ...]
    record: int
    components: tuple[str, ...]  # Pauli strings, or "M" for a record flip


class CompiledCircuit:
    """Flat, array-based view of a circuit used by the sampler and the DEM builder."""

    def __init__(self, circuit: Circuit):
        self.circuit = circuit
        self.indexing = build_indexing(circuit)
        channels = []
        for t, step in enumerate(circuit.timesteps):
            for i, op in enumerate(step):
                if op.noise <= 0:
                    continue
                if op.kind == "RZ":
                    channels.append(NoiseChannel(t, i, "XFLIP", op.qubits, -1, ("X",)))
                elif op.kind == "RX":
                    channels.append(NoiseChannel(t, i, "ZFLIP", op.qubits, -1, ("Z",)))
                elif op.kind in ("MZ", "MX"):
                    channels.append(NoiseChannel(t, i, "MFLIP", op.qubits, op.record, ("M",)))
                elif op.kind == "I":
                    channels.append(NoiseChannel(t, i, "DEP1", op.qubits, -1, ("X", "Y", "Z")))
                elif op.kind == "CX":
                    channels.append(NoiseChannel(t, i, "DEP2", op.qubits, -1, tuple(_TWO_QUBIT_PAULIS)))
                else:
                    raise ValueError(f"unknown operation {op.kind}")
        self.channels = channels

        ncomp = np.array([len(ch.components) for ch in channels], dtype=np.int64)
        self.channel_ncomp = ncomp
        self.channel_offset = np.concatenate([[0], np.cumsum(ncomp)]).astype(np.int64)
        self.channel_timestep = np.array([ch.timestep for ch in channels], dtype=np.int64)
        nc = int(self.channel_offset[-1])
        self.num_components = nc
        self.comp_channel = np.repeat(np.arange(len(channels)), ncomp)
        self.comp_q = np.full((nc, 2), -1, dtype=np.int64)
        self.comp_x = np.zeros((nc, 2), dtype=np.uint64)
        self.comp_z = np.zeros((nc, 2), dtype=np.uint64)
        self.comp_rec = np.full(nc, -1, dtype=np.int64)
        self.comp_prob = np.zeros(nc)
        p = circuit.p
        for ci, ch in enumerate(channels):
            base = self.channel_offset[ci]
            for j, pauli in enumerate(ch.components):
                c = base + j
                self.comp_prob[c] = p / len(ch.components)
                if pauli == "M":
                    self.comp_rec[c] = ch.record
                    continue
                for slot, (q, letter) in enumerate(zip(ch.qubits, pauli)):
                    if letter == "I":
                        continue
                    x, z = _PAULI_BITS[letter]
                    self.comp_q[c, slot] = q
                    self.comp_x[c, slot] = x
                    self.comp_z[c, slot] = z

        # per-timestep vectorised operation groups
        self.steps = []
        for step in circuit.timesteps:
            groups = {"R": [], "CXc": [], "CXt": [], "MZq": [], "MZr": [], "MXq": [], "MXr": []}
            for op in step:
                if op.kind in ("RZ", "RX"):
                    groups["R"].append(op.qubits[0])
                elif op.kind == "CX":
                    groups["CXc"].append(op.qubits[0])
                    groups["CXt"].append(op.qubits[1])
                elif op.kind == "MZ":
                    groups["MZq"].append(op.qubits[0])
                    groups["MZr"].append(op.record)
                elif op.kind == "MX":
                    groups["MXq"].append(op.qubits[0])
                    groups["MXr"].append(op.record)
            self.steps.append({k: np.array(v, dtype=np.int64) for k, v in groups.items()})
        self.step_channel_bounds = np.searchsorted(
            self.channel_timestep, np.arange(len(circuit.timesteps) + 1), side="left"
        )

        idx = self.indexing
        width = max(len(r) for r in idx.records)
        zero_row = circuit.record_count  # sentinel: an all-zero record row
        mat = np.full((idx.num_detectors, width), zero_row, dtype=np.int64)
        for i, r in enumerate(idx.records):
            mat[i, : len(r)] = r
        self.detector_record_matrix = mat

    def provenance(self, comp: int) -> tuple[int, str, str]:
        ch = self.channels[self.comp_channel[comp]]
        op = self.circuit.timesteps[ch.timestep][ch.op_index]
        return ch.timestep, str(op), ch.components[comp - self.channel_offset[self.comp_channel[comp]]]


_compiled_cache: "weakref.WeakKeyDictionary[Circuit, CompiledCircuit]" = weakref.WeakKeyDictionary()


def compile_circuit(circuit: Circuit) -> CompiledCircuit:
    cc = _compiled_cache.get(circuit)
    if cc is None:
        cc = _compiled_cache[circuit] = CompiledCircuit(circuit)
    return cc


# ---------------------------------------------------------------------------
# random fault selection


def shot_components(cc: CompiledCircuit, seed: int) -> np.ndarray:
    """Elementary fault components that fire in the shot keyed by ``seed``.

    Every channel fires independently with probability p; a fired channel picks
    one of its non-identity components uniformly.
    """
    p = cc.circuit.p
    nch = len(cc.channels)
    if p <= 0 or nch == 0:
        return np.empty(0, dtype=np.int64)
    rng = np.random.Generator(np.random.Philox(key=seed & 0xFFFFFFFFFFFFFFFF))
    expected = nch * p
    chunk = int(expected + 6.0 * np.sqrt(expected) + 16)
    pos = np.cumsum(rng.geometric(p, size=chunk)) - 1
    while pos[-1] < nch:
        more = np.cumsum(rng.geometric(p, size=chunk)) + pos[-1]
        pos = np.concatenate([pos, more])
    pos = pos[pos < nch]
    u = rng.random(len(pos))
    return cc.channel_offset[pos] + (u * cc.channel_ncomp[pos]).astype(np.int64)


# ---------------------------------------------------------------------------
# frame propagation


def _bit(shots: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return shots >> 6, np.left_shift(np.uint64(1), (shots & 63).astype(np.uint64))


def propagate(cc: CompiledCircuit, num_shots: int, ev_shot: np.ndarray, ev_comp: np.ndarray):
    """Push the given fault events through the circuit.

    Returns packed detector rows ``(num_detectors, words)`` and the packed
    observable row.
    """
    circuit = cc.circuit
    words = (num_shots + 63) // 64
    nq = circuit.layout.num_qubits
    X = np.zeros((nq, words), dtype=np.uint64)
    Z = np.zeros((nq, words), dtype=np.uint64)
    R = np.zeros((circuit.record_count + 1, words), dtype=np.uint64)

    order = np.argsort(ev_comp, kind="stable")
    ev_shot = ev_shot[order]
    ev_comp = ev_comp[order]
    ev_chan = cc.comp_channel[ev_comp] if len(ev_comp) else np.empty(0, dtype=np.int64)
    bounds = np.searchsorted(ev_chan, cc.step_channel_bounds)

    for t, g in enumerate(cc.steps):
        if len(g["R"]):
            X[g["R"]] = 0
            Z[g["R"]] = 0
        if len(g["CXc"]):
            X[g["CXt"]] ^= X[g["CXc"]]
            Z[g["CXc"]] ^= Z[g["CXt"]]
        if len(g["MZq"]):
            R[g["MZr"]] = X[g["MZq"]]
        if len(g["MXq"]):
            R[g["MXr"]] = Z[g["MXq"]]
        lo, hi = bounds[t], bounds[t + 1]
        if lo == hi:
            continue
        comps = ev_comp[lo:hi]
        word, bit = _bit(ev_shot[lo:hi])
        for slot in range(2):
            q = cc.comp_q[comps, slot]
            m = q >= 0
            if m.any():
                np.bitwise_xor.at(X, (q[m], word[m]), bit[m] * cc.comp_x[comps[m], slot])
                np.bitwise_xor.at(Z, (q[m], word[m]), bit[m] * cc.comp_z[comps[m], slot])
        r = cc.comp_rec[comps]
        m = r >= 0
        if m.any():
            np.bitwise_xor.at(R, (r[m], word[m]), bit[m])

    mat = cc.detector_record_matrix
    D = R[mat[:, 0]].copy()
    for j in range(1, mat.shape[1]):
        D ^= R[mat[:, j]]
    obs = np.zeros(words, dtype=np.uint64)
    for r in cc.indexing.observable_records:
        obs ^= R[r]
    return D, obs


def unpack_rows(packed: np.ndarray, num_shots: int) -> np.ndarray:
    """``(rows, words)`` uint64 -> ``(num_shots, rows)`` uint8."""
    packed = np.ascontiguousarray(packed)
    as_bytes = packed.view(np.uint8).reshape(packed.shape[0], -1)
    bits = np.unpackbits(as_bytes, axis=1, bitorder="little")[:, :num_shots]
    return np.ascontiguousarray(bits.T)


# ---------------------------------------------------------------------------
# samples


@dataclass
class SyndromeSample:
    detectors: np.ndarray  # uint8, (num_detectors,)
    observable_flip: int
    triggered_faults: list[int]
    seed: int
    components: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))


@dataclass
class SampleBatch:
    """Consecutive shots ``seed .. seed + num_shots - 1``.

    ``fault_ptr``/``fault_ids`` hold each shot's triggered mechanisms in CSR form;
    a mechanism counts as triggered when an odd number of its components fired.
    """

    seed: int
    detectors: np.ndarray  # (shots, num_detectors) uint8
    observable: np.ndarray  # (shots,) uint8
    fault_ptr: np.ndarray
    fault_ids: np.ndarray

    @property
    def num_shots(self) -> int:
        return len(self.observable)

    def faults(self, shot: int) -> np.ndarray:
        return self.fault_ids[self.fault_ptr[shot] : self.fault_ptr[shot + 1]]

    def shot(self, i: int) -> SyndromeSample:
        return SyndromeSample(
            self.detectors[i].copy(), int(self.observable[i]), self.faults(i).tolist(), self.seed + i
        )


def _triggered(num_shots, ev_shot, ev_comp, comp_to_mech):
    if comp_to_mech is None or len(ev_comp) == 0:
        return np.zeros(num_shots + 1, dtype=np.int64), np.empty(0, dtype=np.int64)
    mech = comp_to_mech[ev_comp]
    keep = mech >= 0
    shots, mech = ev_shot[keep], mech[keep]
    nm = int(comp_to_mech.max()) + 1
    key = shots * nm + mech
    uniq, counts = np.unique(key, return_counts=True)
    odd = uniq[counts % 2 == 1]
    s, m = odd // nm, odd % nm
    ptr = np.zeros(num_shots + 1, dtype=np.int64)
    np.add.at(ptr, s + 1, 1)
    return np.cumsum(ptr), m.astype(np.int64)


def sample_batch(circuit: Circuit, num_shots: int, seed: int, dem=None) -> SampleBatch:
    """Sample ``num_shots`` shots with per-shot seeds ``seed + i``.

    ``dem`` (a :class:`~swmatch.dem.DetectorErrorModel`) is used to translate
    fired components into mechanism ids; it is built on demand.
    """
    cc = compile_circuit(circuit)
    if dem is None:
        from .dem import extract_dem

        dem = extract_dem(circuit)
    per_shot = [shot_components(cc, seed + i) for i in range(num_shots)]
    ev_comp = np.concatenate(per_shot) if per_shot else np.empty(0, dtype=np.int64)
    ev_shot = np.repeat(np.arange(num_shots, dtype=np.int64), [len(c) for c in per_shot])
    D, obs = propagate(cc, num_shots, ev_shot, ev_comp)
    ptr, ids = _triggered(num_shots, ev_shot, ev_comp, dem.component_to_mechanism)
    return SampleBatch(
        seed=seed,
        detectors=unpack_rows(D, num_shots),
        observable=unpack_rows(obs[None, :], num_shots)[:, 0].copy(),
        fault_ptr=ptr,
        fault_ids=ids,
    )


def iter_batches(circuit: Circuit, num_shots: int, seed: int, dem=None, chunk: int = 4096):
    """Yield :class:`SampleBatch` chunks covering shots ``seed .. seed + num_shots - 1``."""
    if dem is None:
        from .dem import extract_dem

        dem = extract_dem(circuit)
    done = 0
    while done < num_shots:
        n = min(chunk, num_shots - done)
        yield sample_batch(circuit, n, seed + done, dem)
        done += n


def sample(circuit: Circuit, seed: int, dem=None) -> SyndromeSample:
    return sample_batch(circuit, 1, seed, dem).shot(0)


def inject(circuit: Circuit, components, dem=None) -> SyndromeSample:
    """Fault-injection mode: fire exactly ``components``, everything else noiseless."""
    cc = compile_circuit(circuit)
    comps = np.asarray(list(components), dtype=np.int64)
    shots = np.zeros(len(comps), dtype=np.int64)
    D, obs = propagate(cc, 1, shots, comps)
    if dem is None:
        from .dem import extract_dem

        dem = extract_dem(circuit)
    _, ids = _triggered(1, shots, comps, dem.component_to_mechanism)
    return SyndromeSample(
        unpack_rows(D, 1)[0].copy(), int(unpack_rows(obs[None, :], 1)[0, 0]), ids.tolist(), -1, comps
    )


def find_component(circuit: Circuit, timestep: int, kind: str, qubits: tuple, pauli: str) -> int:
    """Component id of the fault ``pauli`` on the channel after op ``kind qubits`` at ``timestep``."""
    cc = compile_circuit(circuit)
    for ci, ch in enumerate(cc.channels):
        op = circuit.timesteps[ch.timestep][ch.op_index]
        if ch.timestep == timestep and op.kind == kind and op.qubits == tuple(qubits):
            return int(cc.channel_offset[ci] + ch.components.index(pauli))
    raise KeyError(f"no {kind}{qubits} channel at timestep {timestep}")


def detector_grid(sample: SyndromeSample, indexing: DetectorIndexing, layer: int) -> np.ndarray:
    """Bits of one detector layer on the ``(d+1) x (d+1)`` stabilizer grid."""
    if not 0 <= layer <= indexing.num_rounds:
        raise IndexError(f"layer {layer} outside 0..{indexing.num_rounds}")
    return detector_grids(np.asarray(sample.detectors)[None, :], indexing)[0, layer]


def detector_grids(detectors: np.ndarray, indexing: DetectorIndexing) -> np.ndarray:
    """``(shots, num_detectors)`` -> ``(shots, N+1, d+1, d+1)`` uint8 grids."""
    size = int(indexing.grid_pos.max()) + 1
    shots = detectors.shape[0]
    out = np.zeros((shots, indexing.num_rounds + 1, size, size), dtype=np.uint8)
    out[:, indexing.layer, indexing.grid_pos[:, 0], indexing.grid_pos[:, 1]] = detectors
    return out
