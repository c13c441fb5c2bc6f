"""Exact minimum-weight perfect matching over detector defects.

Weights are perturbed by a fixed hash of the *global* edge id and then scaled
to 64-bit integers, so every window that contains an edge sees exactly the same
weight for it and shortest paths are unique in practice. Distances are
precomputed once per graph, so decoding a shot only touches the defects.

A pair of defects ``i, j`` can only appear in an optimal matching if their
distance is shorter than sending both to the boundary. Defects therefore split
into independent clusters; clusters of size one or two are solved directly and
larger ones by the blossom kernel on defects plus per-defect boundary copies.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from ._blossom import max_weight_matching
from .dem import DecodingGraph, ModelError

SCALE_BITS = 46
INF = np.int64(1) << np.int64(60)
CAP = np.int64(1) << np.int64(56)  # stand-in boundary distance for defects that cannot reach it
_MASK64 = (1 << 64) - 1


def splitmix64(x: np.ndarray) -> np.ndarray:
    z = np.asarray(x, dtype=np.uint64) + np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def edge_hash_unit(edge_ids, salt: int = 0) -> np.ndarray:
    """Deterministic map from edge ids into the open interval (0, 1)."""
    with np.errstate(over="ignore"):
        keys = np.asarray(edge_ids, dtype=np.uint64) ^ np.uint64(salt & _MASK64)
        h = splitmix64(keys)
    return ((h >> np.uint64(11)).astype(np.float64) + 0.5) / float(1 << 53)


@dataclass(frozen=True)
class PerturbedWeights:
    eta: float
    values: np.ndarray  # w'(e) as floats
    scaled: np.ndarray  # round(w'(e) * 2**SCALE_BITS), the weights actually matched on

    def __call__(self, edge_id: int) -> float:
        return float(self.values[edge_id])

    def total(self, edges) -> int:
        return int(self.scaled[np.asarray(edges, dtype=np.int64)].sum())


def perturb_weights(graph: DecodingGraph, eta: float | None = None, salt: int = 0) -> PerturbedWeights:
    """w'(e) = w(e) + eta * u(e) with u a hash of the global edge id.

    ``salt`` exists only to build deliberately inconsistent tie-breaking for
    negative controls; real decoding always uses salt 0.
    """
    if eta is None:
        eta = graph.w_min * 2.0**-20
    if eta < 0:
        raise ValueError("eta must be non-negative")
    u = edge_hash_unit(np.arange(graph.num_edges), salt)
    values = graph.weight + eta * u
    scaled = np.rint(values * float(1 << SCALE_BITS)).astype(np.int64)
    return PerturbedWeights(float(eta), values, scaled)


# ---------------------------------------------------------------------------
# shortest-path tables


@njit(cache=True, nogil=True)
def _boundary_tree(n, indptr, nbr, arc_edge, arc_w, bw, bedge, eu, ev, ebits):
    bdist = np.full(n, INF, dtype=np.int64)
    bpred = np.full(n, -1, dtype=np.int64)
    bpar = np.zeros(n, dtype=np.uint8)
    done = np.zeros(n, dtype=np.uint8)
    heap = [(np.int64(0), np.int64(0))]
    heap.pop()
    for v in range(n):
        if bedge[v] >= 0:
            bdist[v] = bw[v]
            bpred[v] = bedge[v]
            heap.append((bw[v], np.int64(v)))
    heapq.heapify(heap)
    while len(heap) > 0:
        d, v = heapq.heappop(heap)
        if done[v] or d > bdist[v]:
            continue
        done[v] = 1
        e = bpred[v]
        other = eu[e] + ev[e] - v
        bpar[v] = ebits[e] if other == n else bpar[other] ^ ebits[e]
        for a in range(indptr[v], indptr[v + 1]):
            u = nbr[a]
            nd = d + arc_w[a]
            if nd < bdist[u]:
                bdist[u] = nd
                bpred[u] = arc_edge[a]
                heapq.heappush(heap, (nd, u))
    return bdist, bpred, bpar


@njit(cache=True, nogil=True)
def _pair_tables(n, indptr, nbr, arc_edge, arc_w, eu, ev, ebits, radius):
    dist = np.full((n, n), INF, dtype=np.int64)
    pred = np.full((n, n), -1, dtype=np.int32)
    par = np.zeros((n, n), dtype=np.uint8)
    dl = np.full(n, INF, dtype=np.int64)
    pl = np.full(n, -1, dtype=np.int64)
    touched = np.empty(n, dtype=np.int64)
    for s in range(n):
        nt = 0
        heap = [(np.int64(0), np.int64(s))]
        dl[s] = 0
        touched[nt] = s
        nt += 1
        while len(heap) > 0:
            d, v = heapq.heappop(heap)
            if d > dl[v] or dist[s, v] < INF:
                continue
            if d >= radius[s]:
                break
            dist[s, v] = d
            e = pl[v]
            if e >= 0:
                pred[s, v] = e
                other = eu[e] + ev[e] - v
                par[s, v] = par[s, other] ^ ebits[e]
            for a in range(indptr[v], indptr[v + 1]):
                u = nbr[a]
                nd = d + arc_w[a]
                if nd < dl[u]:
                    if dl[u] == INF:
                        touched[nt] = u
                        nt += 1
                    dl[u] = nd
                    pl[u] = arc_edge[a]
                    heapq.heappush(heap, (nd, u))
        for i in range(nt):
            dl[touched[i]] = INF
            pl[touched[i]] = -1
    return dist, pred, par


class PathTables:
    """Shortest-path data for one matching graph (the global graph or a window).

    Local nodes are ``0..n-1``; local id ``n`` is the merged boundary. Each
    local edge carries its global id and two flag bits: bit 0 is the logical
    flag, bit 1 the logical flag restricted to the caller's ``core`` edges.
    """

    def __init__(self, n, eu, ev, scaled, flags, global_ids, core=None):
        self.n = int(n)
        self.eu = np.ascontiguousarray(eu, dtype=np.int64)
        self.ev = np.ascontiguousarray(ev, dtype=np.int64)
        self.scaled = np.ascontiguousarray(scaled, dtype=np.int64)
        self.global_ids = np.ascontiguousarray(global_ids, dtype=np.int64)
        flags = np.asarray(flags, dtype=np.uint8)
        if core is None:
            core = np.ones(len(flags), dtype=bool)
        self.core = np.asarray(core, dtype=bool)
        self.ebits = (flags | ((flags & self.core) << 1)).astype(np.uint8)
        n = self.n

        inner = self.ev != n
        a_src = np.concatenate([self.eu[inner], self.ev[inner]])
        a_dst = np.concatenate([self.ev[inner], self.eu[inner]])
        a_edge = np.concatenate([np.flatnonzero(inner)] * 2)
        order = np.lexsort((a_edge, a_dst, a_src))
        self.nbr = a_dst[order]
        self.arc_edge = a_edge[order]
        self.arc_w = self.scaled[self.arc_edge]
        self.indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(self.indptr, a_src + 1, 1)
        self.indptr = np.cumsum(self.indptr)

        bw = np.full(n, INF, dtype=np.int64)
        bedge = np.full(n, -1, dtype=np.int64)
        for e in np.flatnonzero(~inner)[::-1]:
            v = self.eu[e]
            if self.scaled[e] <= bw[v]:
                bw[v] = self.scaled[e]
                bedge[v] = e
        self.bdist, self.bpred, self.bpar = _boundary_tree(
            n, self.indptr, self.nbr, self.arc_edge, self.arc_w, bw, bedge, self.eu, self.ev, self.ebits
        )
        finite = self.bdist[self.bdist < INF]
        maxb = int(finite.max()) if len(finite) else 0
        radius = np.where(self.bdist < INF, self.bdist + maxb, INF)
        self.dist, self.pred, self.par = _pair_tables(
            n, self.indptr, self.nbr, self.arc_edge, self.arc_w, self.eu, self.ev, self.ebits, radius
        )

    @classmethod
    def for_graph(cls, graph: DecodingGraph, weights: PerturbedWeights | None = None) -> "PathTables":
        if weights is None:
            cache = graph.__dict__.setdefault("_path_tables", {})
            if "default" not in cache:
                cache["default"] = cls.for_graph(graph, perturb_weights(graph))
            return cache["default"]
        tables = cls(graph.num_nodes, graph.u, graph.v, weights.scaled, graph.flag, np.arange(graph.num_edges))
        tables.weights = weights
        return tables

    def path(self, a: int, b: int) -> list[int]:
        """Local edge ids of the stored shortest path from ``a`` to ``b`` (``b == n`` for the boundary)."""
        out = []
        if b == self.n:
            v = a
            while True:
                e = int(self.bpred[v])
                out.append(e)
                v = int(self.eu[e] + self.ev[e] - v)
                if v == self.n:
                    return out
        s, v = (a, b) if a < b else (b, a)
        while v != s:
            e = int(self.pred[s, v])
            if e < 0:
                raise ModelError(f"no stored path between {a} and {b}")
            out.append(e)
            v = int(self.eu[e] + self.ev[e] - v)
        return out[::-1] if a < b else out


# ---------------------------------------------------------------------------
# per-shot decoding


@njit(cache=True, nogil=True)
def _find(parent, x):
    while parent[x] != x:
        parent[x] = parent[parent[x]]
        x = parent[x]
    return x


@njit(cache=True, nogil=True)
def _decode_one(D, dist, par, bdist, bpar, mates):
    """Match defects ``D`` (sorted local ids). Writes partner positions into ``mates``.

    Returns ``(flag bits, total weight, status)``; status 1 means a defect cannot
    be matched at all.
    """
    m = len(D)
    bits = np.uint8(0)
    total = np.int64(0)
    if m == 0:
        return bits, total, 0
    b = np.empty(m, dtype=np.int64)
    for i in range(m):
        b[i] = bdist[D[i]]
    parent = np.arange(m)
    for i in range(m):
        for j in range(i + 1, m):
            if dist[D[i], D[j]] < b[i] + b[j]:
                ri = _find(parent, i)
                rj = _find(parent, j)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)
    roots = np.empty(m, dtype=np.int64)
    for i in range(m):
        roots[i] = _find(parent, i)
    order = np.argsort(roots, kind="mergesort")
    start = 0
    while start < m:
        stop = start
        while stop < m and roots[order[stop]] == roots[order[start]]:
            stop += 1
        k = stop - start
        if k == 1:
            i = order[start]
            if b[i] >= INF:
                return bits, total, 1
            mates[i] = -1
            total += b[i]
            bits ^= bpar[D[i]]
        elif k == 2:
            i, j = order[start], order[start + 1]
            mates[i] = j
            mates[j] = i
            total += dist[D[i], D[j]]
            bits ^= par[D[i], D[j]]
        else:
            # unmatched defects go to the boundary, so maximising the savings
            # b_i + b_j - d_ij over a (non-perfect) matching minimises the cost
            idx = order[start:stop]
            bc = np.empty(k, dtype=np.int64)
            for x in range(k):
                bc[x] = min(b[idx[x]], CAP)
            w = np.zeros((k, k), dtype=np.int64)
            for x in range(k):
                for y in range(x + 1, k):
                    c = dist[D[idx[x]], D[idx[y]]]
                    if c < bc[x] + bc[y]:
                        w[x, y] = bc[x] + bc[y] - c
                        w[y, x] = w[x, y]
            mate = max_weight_matching(w)
            for x in range(k):
                i = idx[x]
                y = mate[x]
                if y < 0:
                    if b[i] >= INF:
                        return bits, total, 1
                    mates[i] = -1
                    total += b[i]
                    bits ^= bpar[D[i]]
                elif y > x:
                    j = idx[y]
                    mates[i] = j
                    mates[j] = i
                    total += dist[D[i], D[j]]
                    bits ^= par[D[i], D[j]]
        start = stop
    return bits, total, 0


@njit(cache=True, nogil=True)
def _decode_batch(ptr, ids, dist, par, bdist, bpar):
    shots = len(ptr) - 1
    bits = np.zeros(shots, dtype=np.uint8)
    weight = np.zeros(shots, dtype=np.int64)
    mates = np.full(len(ids), -1, dtype=np.int64)
    status = np.zeros(shots, dtype=np.uint8)
    for s in range(shots):
        lo, hi = ptr[s], ptr[s + 1]
        bt, w, st = _decode_one(ids[lo:hi], dist, par, bdist, bpar, mates[lo:hi])
        bits[s] = bt
        weight[s] = w
        status[s] = st
    return bits, weight, mates, status


@njit(cache=True, nogil=True)
def _core_toggles(ptr, ids, mates, n, pred, bpred, eu, ev, core, geu, gev, out):
    """XOR the global endpoints of every core edge on the matched paths into ``out[shot]``."""
    for s in range(len(ptr) - 1):
        lo = ptr[s]
        for a in range(lo, ptr[s + 1]):
            j = mates[a]
            if j >= 0 and j < a - lo:
                continue
            v = ids[a]
            if j < 0:
                while True:
                    e = bpred[v]
                    if core[e]:
                        out[s, geu[e]] ^= 1
                        out[s, gev[e]] ^= 1
                    v = eu[e] + ev[e] - v
                    if v == n:
                        break
            else:
                t = ids[lo + j]
                src = min(v, t)
                v = max(v, t)
                while v != src:
                    e = pred[src, v]
                    if core[e]:
                        out[s, geu[e]] ^= 1
                        out[s, gev[e]] ^= 1
                    v = eu[e] + ev[e] - v


def defects_to_csr(detectors: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``(shots, n)`` bit matrix -> CSR lists of set positions."""
    rows, cols = np.nonzero(detectors)
    ptr = np.zeros(detectors.shape[0] + 1, dtype=np.int64)
    np.add.at(ptr, rows + 1, 1)
    return np.cumsum(ptr), cols.astype(np.int64)


@dataclass
class BatchResult:
    bits: np.ndarray  # bit 0: logical parity of the correction, bit 1: parity of its core part
    weight: np.ndarray
    ptr: np.ndarray
    ids: np.ndarray
    mates: np.ndarray


def decode_batch(tables: PathTables, detectors: np.ndarray) -> BatchResult:
    ptr, ids = defects_to_csr(detectors)
    bits, weight, mates, status = _decode_batch(ptr, ids, tables.dist, tables.par, tables.bdist, tables.bpar)
    if status.any():
        shot = int(np.flatnonzero(status)[0])
        raise ModelError(f"shot {shot}: a defect cannot reach any partner or the boundary")
    return BatchResult(bits, weight, ptr, ids, mates)


# ---------------------------------------------------------------------------
# single-instance API


def as_defect_set(defects, num_nodes: int) -> np.ndarray:
    arr = np.asarray(list(defects), dtype=np.int64)
    arr.sort()
    if len(arr) and (arr[0] < 0 or arr[-1] >= num_nodes):
        raise ValueError("defect id outside the graph")
    if len(np.unique(arr)) != len(arr):
        raise ValueError("duplicate defect ids")
    return arr


@dataclass
class Matching:
    graph: DecodingGraph
    pairs: list[tuple[int, int]]  # partner == graph.boundary for boundary matches
    paths: list[list[int]]  # global edge ids per pair
    total_weight: int  # in units of 2**-SCALE_BITS
    weights: PerturbedWeights = field(repr=False, default=None)

    @property
    def total_weight_float(self) -> float:
        return self.total_weight / float(1 << SCALE_BITS)


def mwpm(graph: DecodingGraph, defects, weights: PerturbedWeights | None = None) -> Matching:
    tables = PathTables.for_graph(graph, weights)
    D = as_defect_set(defects, graph.num_nodes)
    res = decode_batch(tables, np.isin(np.arange(graph.num_nodes), D)[None, :].astype(np.uint8))
    pairs, paths = [], []
    for a, j in enumerate(res.mates):
        if j >= 0 and j < a:
            continue
        x = int(D[a])
        y = graph.boundary if j < 0 else int(D[j])
        pairs.append((x, y))
        paths.append([int(tables.global_ids[e]) for e in tables.path(x, y)])
    return Matching(graph, pairs, paths, int(res.weight[0]), tables.weights)


def correction_from_matching(matching: Matching) -> tuple[frozenset, int]:
    """Symmetric difference of the matched paths and its logical parity."""
    counts: dict[int, int] = {}
    for path in matching.paths:
        for e in path:
            counts[e] = counts.get(e, 0) ^ 1
    C = frozenset(e for e, c in counts.items() if c)
    flip = 0
    for e in C:
        flip ^= int(matching.graph.flag[e])
    return C, flip


def brute_force_mwpm(graph: DecodingGraph, defects, weights: PerturbedWeights | None = None) -> Matching:
    """Reference matcher: plain Dijkstra per defect and exhaustive enumeration of pairings."""
    D = [int(x) for x in as_defect_set(defects, graph.num_nodes)]
    if len(D) > 10:
        raise ValueError("brute force is limited to 10 defects")
    if weights is None:
        weights = perturb_weights(graph)
    W = weights.scaled
    B = graph.boundary
    adj: dict[int, list] = {}
    for e in range(graph.num_edges):
        a, b = int(graph.u[e]), int(graph.v[e])
        adj.setdefault(a, []).append((b, e))
        adj.setdefault(b, []).append((a, e))

    def dijkstra(src):
        dist, prev = {src: 0}, {}
        heap = [(0, src)]
        while heap:
            d, x = heapq.heappop(heap)
            if d > dist[x] or x == B:
                continue
            for y, e in adj.get(x, ()):
                nd = d + int(W[e])
                if nd < dist.get(y, 1 << 62):
                    dist[y] = nd
                    prev[y] = (x, e)
                    heapq.heappush(heap, (nd, y))
        return dist, prev

    info = {x: dijkstra(x) for x in D}

    def cost(x, y):
        return info[x][0].get(y, None)

    best = [None, None]

    def rec(rest, acc, chosen):
        if best[0] is not None and acc >= best[0]:
            return
        if not rest:
            best[0], best[1] = acc, list(chosen)
            return
        x, others = rest[0], rest[1:]
        c = cost(x, B)
        if c is not None:
            rec(others, acc + c, chosen + [(x, B)])
        for i, y in enumerate(others):
            c = cost(x, y)
            if c is not None:
                rec(others[:i] + others[i + 1 :], acc + c, chosen + [(x, y)])

    rec(tuple(D), 0, [])
    if best[0] is None:
        raise ModelError("defects cannot be matched")
    paths = []
    for x, y in best[1]:
        prev = info[x][1]
        path, v = [], y
        while v != x:
            v, e = prev[v]
            path.append(e)
        paths.append(path[::-1])
    return Matching(graph, best[1], paths, int(best[0]), weights)
