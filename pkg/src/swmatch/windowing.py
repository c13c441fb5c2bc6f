"""Sliding windows over the matching graph, per-window labels and the seam merge.

Time is measured in syndrome rounds ``0..N-1``. The closing detector layer
``N`` (final data measurement compared with the last round) belongs to round
``N-1`` for every membership and attribution question, so the final window
always owns it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .code_model import InvalidParameterError
from .dem import DecodingGraph, DetectorErrorModel, ModelError, build_z_graph, weighted_buffer_size
from .frame_sim import SampleBatch, SyndromeSample
from .matching import (
    PathTables,
    PerturbedWeights,
    _core_toggles,
    correction_from_matching,
    decode_batch,
    mwpm,
)

START, BULK, FINAL, SOLE = "start", "bulk", "final", "sole"
KIND_CODES = {START: 0, BULK: 1, FINAL: 2, SOLE: 3}


@dataclass(frozen=True)
class WindowSpec:
    index: int
    kind: str
    core: tuple[int, int]  # [s_c, e_c) in rounds
    full: tuple[int, int]  # [s_f, e_f)
    b: int
    c: int
    num_rounds: int

    @property
    def open_lo(self) -> bool:
        return self.full[0] > 0

    @property
    def open_hi(self) -> bool:
        return self.full[1] < self.num_rounds


def partition(num_rounds: int, b: int, c: int) -> list[WindowSpec]:
    if num_rounds < 1 or c < 1 or b < 0:
        raise InvalidParameterError("need num_rounds >= 1, c >= 1, b >= 0")
    if num_rounds % c:
        raise InvalidParameterError(f"{num_rounds} rounds are not a multiple of the core size {c}")
    m = num_rounds // c
    specs = []
    for i in range(m):
        s_c, e_c = i * c, (i + 1) * c
        if m == 1:
            kind = SOLE
        elif i == 0:
            kind = START
        elif i == m - 1:
            kind = FINAL
        else:
            kind = BULK
        full = (max(0, s_c - b), min(num_rounds, e_c + b))
        specs.append(WindowSpec(i, kind, (s_c, e_c), full, b, c, num_rounds))
    return specs


def node_range(graph: DecodingGraph, rounds: tuple[int, int]) -> tuple[int, int]:
    """Contiguous global node id range of the detectors attributed to ``rounds``."""
    lo, hi = rounds
    stop_layer = graph.num_rounds + 1 if hi >= graph.num_rounds else hi
    return lo * graph.nz, stop_layer * graph.nz


@dataclass
class WindowGraph:
    spec: WindowSpec
    graph: DecodingGraph
    node_lo: int
    node_hi: int
    edge_ids: np.ndarray  # global ids of the local edges
    side: np.ndarray  # per local edge: 0 internal, 1 global boundary, 2 lower cut, 3 upper cut
    core: np.ndarray  # per local edge: member of E_i^c
    tables: PathTables = field(repr=False)

    @property
    def num_nodes(self) -> int:
        return self.node_hi - self.node_lo

    @property
    def core_edges(self) -> np.ndarray:
        return self.edge_ids[self.core]

    @property
    def virtual_sides(self) -> tuple[str, ...]:
        return tuple(s for s, flag in (("lo", self.spec.open_lo), ("hi", self.spec.open_hi)) if flag)


def build_window_graph(
    graph: DecodingGraph, spec: WindowSpec, weights: PerturbedWeights | None = None
) -> WindowGraph:
    """Window subgraph; cut edges are redirected to the window's open time boundary.

    For matching, the open time boundaries and the global boundary are one
    merged vertex: reaching any of them is equally free.
    """
    if weights is None:
        weights = PathTables.for_graph(graph).weights
    lo, hi = node_range(graph, spec.full)
    n = hi - lo
    B = graph.boundary
    u_in = (graph.u >= lo) & (graph.u < hi)
    v_real = graph.v != B
    v_in = v_real & (graph.v >= lo) & (graph.v < hi)
    keep = u_in | v_in
    ids = np.flatnonzero(keep)
    gu, gv = graph.u[ids], graph.v[ids]
    ui, vi = u_in[ids], v_in[ids]
    real = np.where(ui, gu, gv)
    other = np.where(ui, gv, gu)
    inner = ui & vi
    eu = np.where(inner, gu - lo, real - lo)
    ev = np.where(inner, gv - lo, n)
    side = np.zeros(len(ids), dtype=np.int8)
    side[~inner & (other == B)] = 1
    cut = ~inner & (other != B)
    side[cut & (other < lo)] = 2
    side[cut & (other >= hi)] = 3
    rnd = graph.edge_round[ids]
    core = (rnd >= spec.core[0]) & (rnd < spec.core[1])
    tables = PathTables(n, eu, ev, weights.scaled[ids], graph.flag[ids], ids, core)
    tables.weights = weights
    return WindowGraph(spec, graph, lo, hi, ids, side, core, tables)


# ---------------------------------------------------------------------------
# labels


def mechanism_window_labels(graph: DecodingGraph, specs) -> np.ndarray:
    """``(num_mechanisms, m)`` bits: the parity each mechanism contributes to every window label."""
    starts = np.array([s.core[0] for s in specs])
    edge_window = np.searchsorted(starts, graph.edge_round, side="right") - 1
    nm = len(graph.mech_ptr) - 1
    mech_of = np.repeat(np.arange(nm), np.diff(graph.mech_ptr))
    out = np.zeros((nm, len(specs)), dtype=np.uint8)
    np.bitwise_xor.at(out, (mech_of, edge_window[graph.mech_edges]), graph.flag[graph.mech_edges])
    return out


@dataclass
class LabelSet:
    y: np.ndarray  # per window
    global_flip: int


def _graph_for(dem: DetectorErrorModel) -> DecodingGraph:
    g = getattr(dem, "_z_graph", None)
    if g is None:
        g = dem._z_graph = build_z_graph(dem)
    return g


def derive_labels(sample: SyndromeSample, dem: DetectorErrorModel, specs) -> LabelSet:
    for f in sample.triggered_faults:
        m = dem.mechanisms[f]
        if not m.z_footprint and m.observable_flip:
            raise ModelError(f"undetectable logical fault {m.provenance}")
    y = np.zeros(len(specs), dtype=np.uint8)
    if not len(sample.triggered_faults):
        return LabelSet(y, 0)
    labels = mechanism_window_labels(_graph_for(dem), specs)
    for f in sample.triggered_faults:
        y ^= labels[f]
    return LabelSet(y, int(np.bitwise_xor.reduce(y)) if len(y) else 0)


def batch_labels(batch: SampleBatch, graph: DecodingGraph, specs) -> np.ndarray:
    """``(shots, m)`` ground-truth window labels for a sample batch."""
    labels = mechanism_window_labels(graph, specs)
    counts = sparse.csr_matrix(
        (np.ones(len(batch.fault_ids), dtype=np.int64), batch.fault_ids, batch.fault_ptr),
        shape=(batch.num_shots, labels.shape[0]),
    )
    return ((counts @ labels.astype(np.int64)) % 2).astype(np.uint8)


# ---------------------------------------------------------------------------
# decoding


@dataclass
class WindowOutcome:
    y_hat: int
    core_correction: frozenset
    defects_consumed: tuple[int, ...]


def _z_bits(sample, graph: DecodingGraph) -> np.ndarray:
    det = sample.detectors if isinstance(sample, SyndromeSample) else np.asarray(sample)
    return np.asarray(det[: graph.num_nodes], dtype=np.uint8)


def decode_window(wg: WindowGraph, sample) -> WindowOutcome:
    z = _z_bits(sample, wg.graph)[wg.node_lo : wg.node_hi]
    res = decode_batch(wg.tables, z[None, :])
    t = wg.tables
    counts: dict[int, int] = {}
    for a, j in enumerate(res.mates):
        if 0 <= j < a:
            continue
        x = int(res.ids[a])
        y = t.n if j < 0 else int(res.ids[j])
        for e in t.path(x, y):
            if t.core[e]:
                counts[int(t.global_ids[e])] = counts.get(int(t.global_ids[e]), 0) ^ 1
    core_corr = frozenset(e for e, v in counts.items() if v)
    consumed = tuple(int(x) + wg.node_lo for x in res.ids)
    return WindowOutcome(int(res.bits[0] >> 1) & 1, core_corr, consumed)


def combine(outcomes) -> int:
    bit = 0
    for o in outcomes:
        bit ^= int(o.y_hat if isinstance(o, WindowOutcome) else o)
    return bit


def residual_seam_defects(sample, outcomes, graph: DecodingGraph) -> np.ndarray:
    z = _z_bits(sample, graph).copy()
    parity = np.zeros(graph.num_nodes + 1, dtype=np.uint8)
    for o in outcomes:
        for e in o.core_correction:
            parity[graph.u[e]] ^= 1
            parity[graph.v[e]] ^= 1
    return np.flatnonzero(parity[: graph.num_nodes] ^ z)


def merge_decode(graph: DecodingGraph, residual) -> int:
    if len(residual) == 0:
        return 0
    return correction_from_matching(mwpm(graph, residual))[1]


@dataclass
class WindowBatchResult:
    y_hat: np.ndarray  # (shots, m)
    combined: np.ndarray  # (shots,)
    residual: np.ndarray | None = None  # (shots, num_nodes) residual seam defects
    merged: np.ndarray | None = None

    @property
    def residual_shots(self) -> np.ndarray:
        return self.residual.any(axis=1)


class SlidingWindowPipeline:
    """Decodes batches of Z-detector syndromes window by window."""

    def __init__(self, graph: DecodingGraph, b: int, c: int, weights: PerturbedWeights | None = None):
        self.graph = graph
        self.specs = partition(graph.num_rounds, b, c)
        self.windows = [build_window_graph(graph, s, weights) for s in self.specs]
        self.global_tables = PathTables.for_graph(graph) if weights is None else None
        self._weights = weights

    def decode_window_batch(self, i: int, zdet: np.ndarray):
        wg = self.windows[i]
        return decode_batch(wg.tables, zdet[:, wg.node_lo : wg.node_hi])

    def core_toggles(self, i: int, res, shots: int) -> np.ndarray:
        wg = self.windows[i]
        g = self.graph
        out = np.zeros((shots, g.num_nodes + 1), dtype=np.uint8)
        t = wg.tables
        _core_toggles(res.ptr, res.ids, res.mates, t.n, t.pred, t.bpred, t.eu, t.ev, t.core,
                      g.u[wg.edge_ids], g.v[wg.edge_ids], out)
        return out

    def decode(self, zdet: np.ndarray, residual: bool = False, merge: bool = False) -> WindowBatchResult:
        zdet = np.ascontiguousarray(zdet[:, : self.graph.num_nodes], dtype=np.uint8)
        shots = zdet.shape[0]
        y_hat = np.zeros((shots, len(self.windows)), dtype=np.uint8)
        acc = np.zeros((shots, self.graph.num_nodes + 1), dtype=np.uint8) if (residual or merge) else None
        for i in range(len(self.windows)):
            res = self.decode_window_batch(i, zdet)
            y_hat[:, i] = (res.bits >> 1) & 1
            if acc is not None:
                acc ^= self.core_toggles(i, res, shots)
        combined = np.bitwise_xor.reduce(y_hat, axis=1)
        out = WindowBatchResult(y_hat, combined)
        if acc is not None:
            out.residual = acc[:, : self.graph.num_nodes] ^ zdet
        if merge:
            tables = self.global_tables or PathTables.for_graph(self.graph, self._weights)
            extra = np.zeros(shots, dtype=np.uint8)
            rows = np.flatnonzero(out.residual.any(axis=1))
            if len(rows):
                res = decode_batch(tables, out.residual[rows])
                extra[rows] = res.bits & 1
            out.merged = combined ^ extra
        return out

    def seam_buffer_weight(self) -> float:
        return seam_buffer_weight(self.graph, self.specs)


def seam_buffer_weight(graph: DecodingGraph, specs) -> float:
    """Smallest weighted buffer size over every seam seen by every window."""
    best = math.inf
    for s in specs:
        if s.open_hi:
            best = min(best, weighted_buffer_size(graph, s.core[1], s.full))
        if s.open_lo:
            best = min(best, weighted_buffer_size(graph, s.core[0] - 1, s.full))
    return best


# ---------------------------------------------------------------------------
# diagnostics


@dataclass
class Theorem1Report:
    w_b: float
    shots: int
    residual_shots: int
    violations: list  # (shot, error weight)

    @property
    def ok(self) -> bool:
        return not self.violations


def theorem1_diagnostic(batch: SampleBatch, result: WindowBatchResult, graph: DecodingGraph, specs=None,
                        w_b: float | None = None) -> Theorem1Report:
    """Every shot with a residual seam syndrome must carry an error of weight at least w_b / 2."""
    if w_b is None:
        w_b = seam_buffer_weight(graph, specs)
    rows = np.flatnonzero(result.residual.any(axis=1))
    slack = 1e-9 * max(1.0, w_b)
    violations = []
    for s in rows:
        edges = graph.error_edges(batch.faults(int(s)))
        weight = float(graph.weight[edges].sum())
        if weight < w_b / 2 - slack:
            violations.append((int(s), weight))
    return Theorem1Report(w_b, batch.num_shots, len(rows), violations)


@dataclass
class ConsistencyReport:
    compared_pairs: int
    violations: int


def overlap_consistency(pipeline: SlidingWindowPipeline, zdet: np.ndarray) -> ConsistencyReport:
    """Defect pairs matched in two overlapping windows with the whole path inside the overlap must use the same path."""
    g = pipeline.graph
    zdet = np.ascontiguousarray(zdet[:, : g.num_nodes], dtype=np.uint8)
    results = [pipeline.decode_window_batch(i, zdet) for i in range(len(pipeline.windows))]
    compared = bad = 0
    for i in range(len(pipeline.windows) - 1):
        for j in range(i + 1, len(pipeline.windows)):
            A, B = pipeline.windows[i], pipeline.windows[j]
            lo, hi = max(A.node_lo, B.node_lo), min(A.node_hi, B.node_hi)
            if lo >= hi:
                continue
            pa = _pair_paths(A, results[i], lo, hi)
            pb = _pair_paths(B, results[j], lo, hi)
            for key, path in pa.items():
                other = pb.get(key)
                if other is not None:
                    compared += 1
                    bad += other != path
    return ConsistencyReport(compared, bad)


def _pair_paths(wg: WindowGraph, res, lo: int, hi: int) -> dict:
    """(shot, u, v) -> edge tuple for defect pairs whose path lies inside nodes [lo, hi)."""
    t = wg.tables
    g = wg.graph
    out = {}
    for s in range(len(res.ptr) - 1):
        a0, a1 = res.ptr[s], res.ptr[s + 1]
        for a in range(a0, a1):
            j = res.mates[a]
            if j <= a - a0:
                continue
            x, y = int(res.ids[a]), int(res.ids[a0 + j])
            path = t.path(x, y)
            gids = t.global_ids[path]
            if (t.ev[path] == t.n).any():
                continue
            ends = np.concatenate([g.u[gids], g.v[gids]])
            if ends.min() < lo or ends.max() >= hi:
                continue
            out[(s, x + wg.node_lo, y + wg.node_lo)] = tuple(sorted(gids.tolist()))
    return out
