"""Detector error model extraction and the Z-basis matching graph."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .code_model import Circuit
from .frame_sim import CompiledCircuit, DetectorIndexing, compile_circuit


class ModelError(RuntimeError):
    """The noise model produced something the matching graph cannot represent."""


class NonDeterministicDetectorError(ModelError):
    pass


class DecompositionError(ModelError):
    pass


def xor_merge(p1: float, p2: float) -> float:
    """Probability that exactly one of two independent events fires."""
    return p1 * (1 - p2) + p2 * (1 - p1)


def _bits(x: int) -> list[int]:
    out = []
    while x:
        low = x & -x
        out.append(low.bit_length() - 1)
        x ^= low
    return out


@dataclass(frozen=True)
class FaultMechanism:
    id: int
    probability: float
    z_footprint: tuple[int, ...]
    x_footprint: tuple[int, ...]
    observable_flip: int
    provenance: tuple  # (timestep, operation, Pauli component) of the first contributing fault


@dataclass
class DetectorErrorModel:
    mechanisms: list[FaultMechanism]
    indexing: DetectorIndexing
    component_to_mechanism: np.ndarray  # elementary component -> mechanism id, -1 if harmless

    def dump(self) -> str:
        """One ``error(p) D.. L0`` line per mechanism; Z detectors listed before X detectors."""
        lines = []
        for m in self.mechanisms:
            targets = [f"D{i}" for i in m.z_footprint + m.x_footprint]
            if m.observable_flip:
                targets.append("L0")
            lines.append(f"error({m.probability:.12g}) " + " ".join(targets))
        return "\n".join(lines) + ("\n" if lines else "")


def component_footprints(cc: CompiledCircuit) -> list[int]:
    """Detector/observable footprint of every elementary fault component as a bitmask.

    Bit ``i`` is detector ``i``; bit ``num_detectors`` is the logical observable.
    Computed in one backward pass: each detector's parity is pulled back through
    the circuit, so a Pauli at some location flips exactly the detectors whose
    pulled-back operator it anticommutes with.
    """
    circuit = cc.circuit
    idx = cc.indexing
    nd = idx.num_detectors
    rec_mask = [0] * circuit.record_count
    for det, recs in enumerate(idx.records):
        for r in recs:
            rec_mask[r] ^= 1 << det
    for r in idx.observable_records:
        rec_mask[r] ^= 1 << nd

    nq = circuit.layout.num_qubits
    xs = [0] * nq  # targets whose pulled-back operator has an X component on q
    zs = [0] * nq
    foot = [0] * cc.num_components

    def sens(letter: str, q: int) -> int:
        if letter == "X":
            return zs[q]
        if letter == "Z":
            return xs[q]
        if letter == "Y":
            return xs[q] ^ zs[q]
        return 0

    bounds = cc.step_channel_bounds
    for t in range(len(circuit.timesteps) - 1, -1, -1):
        for ci in range(bounds[t], bounds[t + 1]):
            ch = cc.channels[ci]
            base = cc.channel_offset[ci]
            for j, pauli in enumerate(ch.components):
                if pauli == "M":
                    foot[base + j] = rec_mask[ch.record]
                elif len(pauli) == 1:
                    foot[base + j] = sens(pauli, ch.qubits[0])
                else:
                    foot[base + j] = sens(pauli[0], ch.qubits[0]) ^ sens(pauli[1], ch.qubits[1])
        for op in circuit.timesteps[t]:
            if op.kind == "CX":
                c, tg = op.qubits
                xs[tg] ^= xs[c]
                zs[c] ^= zs[tg]
            elif op.kind == "MZ":
                zs[op.qubits[0]] ^= rec_mask[op.record]
            elif op.kind == "MX":
                xs[op.qubits[0]] ^= rec_mask[op.record]
            elif op.kind in ("RZ", "RX"):
                q = op.qubits[0]
                bad = xs[q] if op.kind == "RZ" else zs[q]
                if bad:
                    raise NonDeterministicDetectorError(
                        f"detectors {_bits(bad)[:5]} depend on the random outcome of {op} at timestep {t}"
                    )
                xs[q] = zs[q] = 0
    return foot


def extract_dem(circuit: Circuit) -> DetectorErrorModel:
    cc = compile_circuit(circuit)
    cached = getattr(cc, "_dem", None)
    if cached is not None:
        return cached
    idx = cc.indexing
    nd = idx.num_detectors
    nz_total = idx.num_z
    foot = component_footprints(cc)

    merged: dict[int, float] = {}
    first: dict[int, int] = {}
    for comp, f in enumerate(foot):
        if f == 0:
            continue
        p = float(cc.comp_prob[comp])
        if f in merged:
            merged[f] = xor_merge(merged[f], p)
        else:
            merged[f] = p
            first[f] = comp

    def key(f: int):
        dets = _bits(f & ((1 << nd) - 1))
        return (tuple(d for d in dets if d < nz_total), tuple(d for d in dets if d >= nz_total), (f >> nd) & 1)

    keyed = sorted((key(f), f) for f in merged)
    mechanisms = []
    fp_to_id = {}
    for i, ((zf, xf, obs), f) in enumerate(keyed):
        mechanisms.append(FaultMechanism(i, merged[f], zf, xf, obs, cc.provenance(first[f])))
        fp_to_id[f] = i
    comp_to_mech = np.array([fp_to_id.get(f, -1) if f else -1 for f in foot], dtype=np.int64)
    dem = DetectorErrorModel(mechanisms, idx, comp_to_mech)
    cc._dem = dem
    return dem


# ---------------------------------------------------------------------------
# decoding graph


@dataclass
class DecodingGraph:
    """Weighted matching graph over the Z detectors.

    Node ids equal Z-detector ids. The single virtual boundary node has id
    ``num_nodes``; it covers both the spatial boundary and the closed time
    boundaries of the whole experiment.
    """

    num_nodes: int
    nz: int
    num_rounds: int
    u: np.ndarray
    v: np.ndarray  # == num_nodes for boundary edges
    probability: np.ndarray
    weight: np.ndarray
    flag: np.ndarray  # logical flag l(e)
    layer: np.ndarray  # min real-endpoint layer
    mech_ptr: np.ndarray  # mechanism -> decomposed edge ids (CSR)
    mech_edges: np.ndarray

    @property
    def boundary(self) -> int:
        return self.num_nodes

    @property
    def num_edges(self) -> int:
        return len(self.u)

    @property
    def w_min(self) -> float:
        return float(self.weight.min())

    @property
    def max_degree(self) -> int:
        deg = np.bincount(self.u, minlength=self.num_nodes + 1)
        deg += np.bincount(self.v, minlength=self.num_nodes + 1)
        return int(deg[: self.num_nodes].max())

    def node_layer(self, nodes) -> np.ndarray:
        return np.asarray(nodes) // self.nz

    def node_round(self, nodes) -> np.ndarray:
        """Window-attribution round of a node: its layer, with the closing layer folded into the last round."""
        return np.minimum(np.asarray(nodes) // self.nz, self.num_rounds - 1)

    @property
    def edge_round(self) -> np.ndarray:
        return np.minimum(self.layer, self.num_rounds - 1)

    def mechanism_edges(self, mech: int) -> np.ndarray:
        return self.mech_edges[self.mech_ptr[mech] : self.mech_ptr[mech + 1]]

    def error_edges(self, mechanisms) -> np.ndarray:
        """Edge set flipped by a collection of triggered mechanisms (XOR of their decompositions)."""
        if len(mechanisms) == 0:
            return np.empty(0, dtype=np.int64)
        parts = [self.mechanism_edges(m) for m in mechanisms]
        ids, counts = np.unique(np.concatenate(parts), return_counts=True)
        return ids[counts % 2 == 1]

    def boundary_of(self, edges) -> np.ndarray:
        """Real nodes touched an odd number of times by ``edges`` (the boundary node is excluded)."""
        edges = np.asarray(edges, dtype=np.int64)
        ends = np.concatenate([self.u[edges], self.v[edges]])
        ends = ends[ends != self.num_nodes]
        ids, counts = np.unique(ends, return_counts=True)
        return ids[counts % 2 == 1]


def _decompose(zf, obs, incident, known):
    """Split hyperedge footprint ``zf`` into known edges whose flags XOR to ``obs``."""

    def search(remaining, parity):
        if not remaining:
            return [] if parity == 0 else None
        f = remaining[0]
        for k in incident.get(f, ()):
            other = k[1] if k[0] == f else k[0]
            if other == -1:
                rest = remaining[1:]
            elif other in remaining[1:]:
                rest = tuple(x for x in remaining[1:] if x != other)
            else:
                continue
            sub = search(rest, parity ^ k[2])
            if sub is not None:
                return [k] + sub
        return None

    return search(tuple(zf), obs)


def build_z_graph(dem: DetectorErrorModel) -> DecodingGraph:
    idx = dem.indexing
    n = idx.num_z
    prob: dict[tuple, float] = {}
    mech_keys: list[list[tuple]] = [[] for _ in dem.mechanisms]
    hyper = []

    for m in dem.mechanisms:
        zf = m.z_footprint
        if not zf:
            if m.observable_flip:
                raise ModelError(f"undetectable logical fault from {m.provenance}")
            continue
        if len(zf) > 2:
            hyper.append(m)
            continue
        k = (zf[0], zf[1], m.observable_flip) if len(zf) == 2 else (zf[0], -1, m.observable_flip)
        prob[k] = xor_merge(prob[k], m.probability) if k in prob else m.probability
        mech_keys[m.id].append(k)

    if hyper:
        incident: dict[int, list] = {}
        for k in sorted(prob, key=lambda k: (k[1] == -1, k)):
            incident.setdefault(k[0], []).append(k)
            if k[1] != -1:
                incident.setdefault(k[1], []).append(k)
        for lst in incident.values():
            lst.sort(key=lambda k: (k[1] == -1 and k[0] != -1, k[1] if k[1] != -1 else k[0], k[2]))
        for m in hyper:
            parts = _decompose(m.z_footprint, m.observable_flip, incident, prob)
            if parts is None:
                raise DecompositionError(
                    f"cannot decompose Z footprint {m.z_footprint} (flag {m.observable_flip}) from {m.provenance}"
                )
            for k in parts:
                prob[k] = xor_merge(prob[k], m.probability)
            mech_keys[m.id].extend(parts)

    keys = sorted(prob, key=lambda k: (k[0], n if k[1] == -1 else k[1], k[2]))
    key_id = {k: i for i, k in enumerate(keys)}
    u = np.array([k[0] for k in keys], dtype=np.int64)
    v = np.array([n if k[1] == -1 else k[1] for k in keys], dtype=np.int64)
    p = np.array([prob[k] for k in keys])
    if np.any(p >= 0.5):
        raise ModelError("an edge probability reached 0.5; weights would be non-positive")
    flag = np.array([k[2] for k in keys], dtype=np.uint8)
    ptr = np.zeros(len(dem.mechanisms) + 1, dtype=np.int64)
    ptr[1:] = np.cumsum([len(ks) for ks in mech_keys])
    ids = np.array([key_id[k] for ks in mech_keys for k in ks], dtype=np.int64)

    graph = DecodingGraph(
        num_nodes=n,
        nz=idx.nz,
        num_rounds=idx.num_rounds,
        u=u,
        v=v,
        probability=p,
        weight=np.log((1 - p) / p),
        flag=flag,
        layer=u // idx.nz,
        mech_ptr=ptr,
        mech_edges=ids,
    )
    _check_graph(graph)
    return graph


def _check_graph(g: DecodingGraph) -> None:
    n = g.num_nodes
    touched = np.zeros(n + 1, dtype=bool)
    touched[g.u] = True
    touched[g.v] = True
    if not touched[:n].all():
        lonely = np.flatnonzero(~touched[:n])[:5]
        raise ModelError(f"detectors without incident edges: {lonely.tolist()}")
    adj = coo_matrix((np.ones(len(g.u)), (g.u, g.v)), shape=(n + 1, n + 1))
    ncomp, _ = connected_components(adj, directed=False)
    if ncomp != 1:
        raise ModelError(f"decoding graph has {ncomp} components")


# ---------------------------------------------------------------------------
# weighted buffer size


BOUNDARY, OPEN_LO, OPEN_HI = -1, -2, -3


def window_adjacency(graph: DecodingGraph, start: int, stop: int):
    """Adjacency of the window holding rounds ``[start, stop)``.

    ``adj[node]`` lists ``(neighbour, weight)``. Neighbour ``BOUNDARY`` is the
    global boundary, ``OPEN_LO``/``OPEN_HI`` the open time boundaries the
    window's cut edges are redirected to.
    """
    if stop <= start:
        raise ValueError("empty window")
    nround = graph.node_round(np.arange(graph.num_nodes))
    inside = (nround >= start) & (nround < stop)
    adj: dict = {int(x): [] for x in np.flatnonzero(inside)}
    for e in range(graph.num_edges):
        a, b, w = int(graph.u[e]), int(graph.v[e]), float(graph.weight[e])
        a_in = bool(inside[a])
        b_in = b != graph.num_nodes and bool(inside[b])
        if b == graph.num_nodes:
            if a_in:
                adj[a].append((BOUNDARY, w))
        elif a_in and b_in:
            adj[a].append((b, w))
            adj[b].append((a, w))
        elif a_in or b_in:
            real, out = (a, b) if a_in else (b, a)
            side = OPEN_LO if nround[out] < start else OPEN_HI
            adj[real].append((side, w))
    return adj


def weighted_buffer_size(graph: DecodingGraph, seam_layer: int, window: tuple[int, int]) -> float:
    """Shortest unperturbed distance from the seam layer to an open time boundary of ``window``.

    ``window`` is the full round interval ``[start, stop)``. A seam layer that
    sits just outside an open side is on the boundary itself (distance 0).
    """
    start, stop = window
    if stop <= start:
        raise ValueError("empty window")
    open_lo, open_hi = start > 0, stop < graph.num_rounds
    last_layer = graph.num_rounds if stop == graph.num_rounds else stop - 1
    if (open_hi and seam_layer == stop) or (open_lo and seam_layer == start - 1):
        return 0.0
    if not start <= seam_layer <= last_layer:
        raise ValueError(f"seam layer {seam_layer} outside window {window}")
    if not (open_lo or open_hi):
        return math.inf
    adj = window_adjacency(graph, start, stop)
    seam_nodes = [x for x in adj if x // graph.nz == seam_layer]
    dist = {x: 0.0 for x in seam_nodes}
    heap = [(0.0, x) for x in seam_nodes]
    heapq.heapify(heap)
    while heap:
        d, x = heapq.heappop(heap)
        if x in (OPEN_LO, OPEN_HI):
            return d
        if d > dist.get(x, math.inf):
            continue
        for y, w in adj[x]:
            if y == BOUNDARY:
                continue
            nd = d + w
            if nd < dist.get(y, math.inf):
                dist[y] = nd
                heapq.heappush(heap, (nd, y))
    return math.inf
