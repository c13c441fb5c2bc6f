"""Memory-experiment harnesses and the statistics used to report them."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .code_model import InvalidParameterError, build_layout, build_memory_circuit
from .dem import build_z_graph, extract_dem
from .frame_sim import iter_batches, sample_batch
from .matching import PathTables, decode_batch
from .windowing import SlidingWindowPipeline, batch_labels

# physical error rates whose detector event density matches the reference hardware-like noise
P_EFF = {3: 0.00380, 5: 0.00353, 7: 0.00336}

MODES = ("global", "windowed_no_merge", "windowed_merge")


def ler_per_round(p_L: float, N: int) -> float:
    if N < 1:
        raise InvalidParameterError("N must be at least 1")
    if p_L >= 0.5:
        return 0.5
    if N == 1:
        return p_L
    # expm1/log1p keep full precision when p_L is small and N large
    return -math.expm1(math.log1p(-2.0 * p_L) / N) / 2.0


def logical_error_rate(eps: float, N: int) -> float:
    """Forward map: probability of an odd number of per-round flips over N rounds."""
    if N < 1:
        raise InvalidParameterError("N must be at least 1")
    if eps >= 0.5:
        return 0.5
    if N == 1:
        return eps
    return -math.expm1(N * math.log1p(-2.0 * eps)) / 2.0


def fidelity(p_L: float) -> float:
    return 1.0 - 2.0 * p_L


def independence_estimate(rates) -> float:
    """Probability that an odd number of independent events with the given rates occur."""
    prod = 1.0
    for p in rates:
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"rate {p} outside [0, 1]")
        prod *= 1.0 - 2.0 * p
    return (1.0 - prod) / 2.0


@dataclass
class ExperimentStats:
    shots: int
    logical_errors: int
    N: int

    @property
    def p_L(self) -> float:
        return self.logical_errors / self.shots if self.shots else 0.0

    @property
    def std_err(self) -> float:
        p = self.p_L
        return math.sqrt(p * (1 - p) / self.shots) if self.shots else 0.0

    @property
    def epsilon(self) -> float:
        return ler_per_round(self.p_L, self.N)

    @property
    def epsilon_std_err(self) -> float:
        """Standard error of epsilon propagated from p_L."""
        p = self.p_L
        if p >= 0.5 or self.shots == 0:
            return math.nan
        deriv = (1 - 2 * p) ** (1 / self.N - 1) / self.N
        return deriv * self.std_err

    @property
    def fidelity(self) -> float:
        return fidelity(self.p_L)

    @property
    def low_count(self) -> bool:
        """Fewer than 25 failures: the normal approximation behind std_err is rough."""
        return self.logical_errors < 25

    def as_dict(self) -> dict:
        out = asdict(self)
        out.update(p_L=self.p_L, std_err=self.std_err, epsilon=self.epsilon, fidelity=self.fidelity)
        return out


class _Setup:
    """Circuit, DEM and graph for one (d, p, N), shared by the harnesses."""

    def __init__(self, d: int, p: float, N: int):
        self.d, self.p, self.N = d, p, N
        self.circuit = build_memory_circuit(build_layout(d), N, p)
        self.dem = extract_dem(self.circuit)
        if p > 0:
            self.graph = build_z_graph(self.dem)
        else:
            # noiseless shots have empty syndromes; any weights give the same (trivial) answer
            self.graph = build_z_graph(extract_dem(build_memory_circuit(build_layout(d), N, 1e-3)))

    def batches(self, shots: int, seed: int, chunk: int = 4096):
        return iter_batches(self.circuit, shots, seed, self.dem, chunk)

    def map_batches(self, fn, shots: int, seed: int, chunk: int, workers: int = 1) -> list:
        """``fn`` over every chunk; chunk ``k`` always holds shots ``seed + k*chunk ...``."""
        if workers <= 1:
            return [fn(batch) for batch in self.batches(shots, seed, chunk)]
        starts = range(0, shots, chunk)

        def run(lo):
            return fn(sample_batch(self.circuit, min(chunk, shots - lo), seed + lo, self.dem))

        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run, starts))


def _setup(d, p, N) -> _Setup:
    return _Setup(d, p, N)


def run_memory_experiment(
    d: int,
    p: float,
    N: int,
    shots: int,
    mode: str = "global",
    b: int | None = None,
    c: int | None = None,
    seed: int = 0,
    chunk: int = 4096,
    workers: int = 1,
) -> ExperimentStats:
    if mode not in MODES:
        raise InvalidParameterError(f"mode must be one of {MODES}")
    st = _setup(d, p, N)
    b = d if b is None else b
    c = d if c is None else c
    if mode == "global":
        tables = PathTables.for_graph(st.graph)
    else:
        pipeline = SlidingWindowPipeline(st.graph, b, c)

    def count(batch):
        z = batch.detectors[:, : st.graph.num_nodes]
        if mode == "global":
            pred = decode_batch(tables, z).bits & 1
        else:
            out = pipeline.decode(z, merge=mode == "windowed_merge")
            pred = out.merged if mode == "windowed_merge" else out.combined
        return int(np.count_nonzero(pred != batch.observable))

    return ExperimentStats(shots, sum(st.map_batches(count, shots, seed, chunk, workers)), N)


@dataclass
class WindowStats:
    kinds: list
    rates: list  # Pr[y_hat_i != y_i]
    p_g: float
    p_hat_g: float
    shots: int
    residual_rate: float

    @property
    def p_g_std_err(self) -> float:
        return math.sqrt(self.p_g * (1 - self.p_g) / self.shots)


def window_stats(d: int, p: float, shots: int, N: int | None = None, b: int | None = None,
                 c: int | None = None, seed: int = 0, chunk: int = 4096, workers: int = 1) -> WindowStats:
    N = 3 * d if N is None else N
    b = d if b is None else b
    c = d if c is None else c
    st = _setup(d, p, N)
    pipeline = SlidingWindowPipeline(st.graph, b, c)

    def count(batch):
        labels = batch_labels(batch, st.graph, pipeline.specs)
        out = pipeline.decode(batch.detectors, residual=True)
        return (
            (out.y_hat != labels).sum(axis=0),
            int(np.count_nonzero(out.combined != batch.observable)),
            int(out.residual_shots.sum()),
        )

    parts = st.map_batches(count, shots, seed, chunk, workers)
    wrong = sum((x[0] for x in parts), np.zeros(len(pipeline.specs), dtype=np.int64))
    global_wrong = sum(x[1] for x in parts)
    residual = sum(x[2] for x in parts)
    rates = (wrong / shots).tolist()
    return WindowStats([s.kind for s in pipeline.specs], rates, global_wrong / shots,
                       independence_estimate(rates), shots, residual / shots)


def buffer_sweep(d: int, p: float, N: int, shots: int, b_values, c: int | None = None,
                 modes=MODES, seed: int = 0, chunk: int = 2048, workers: int = 1) -> list[dict]:
    """Logical error rate against buffer size; every mode and buffer sees the same shots."""
    c = d if c is None else c
    st = _setup(d, p, N)
    rows = []
    global_errors = None
    if "global" in modes:
        tables = PathTables.for_graph(st.graph)

        def count_global(batch):
            pred = decode_batch(tables, batch.detectors[:, : st.graph.num_nodes]).bits & 1
            return int(np.count_nonzero(pred != batch.observable))

        global_errors = sum(st.map_batches(count_global, shots, seed, chunk, workers))
    for b in b_values:
        pipeline = SlidingWindowPipeline(st.graph, b, c)
        want_merge = "windowed_merge" in modes

        def count(batch, pipeline=pipeline):
            out = pipeline.decode(batch.detectors, residual=want_merge, merge=want_merge)
            nm = int(np.count_nonzero(out.combined != batch.observable))
            if not want_merge:
                return nm, 0, 0
            return nm, int(np.count_nonzero(out.merged != batch.observable)), int(out.residual_shots.sum())

        nm, mg, res = np.sum(st.map_batches(count, shots, seed, chunk, workers), axis=0).tolist()
        row = {"d": d, "p": p, "N": N, "b": b, "c": c, "shots": shots}
        if "windowed_no_merge" in modes:
            row["ler_no_merge"] = nm / shots
        if want_merge:
            row["ler_merge"] = mg / shots
            row["residual_rate"] = res / shots
        if global_errors is not None:
            row["ler_global"] = global_errors / shots
        rows.append(row)
        del pipeline
    return rows


def threshold_sweep(d_values, p_values, shots: int, rounds=None, seed: int = 0, chunk: int = 4096,
                    workers: int = 1) -> list[dict]:
    """Global-matching logical error rates on a (d, p) grid; ``rounds`` defaults to d per code."""
    rows = []
    for d in d_values:
        N = d if rounds is None else rounds
        for p in p_values:
            stats = run_memory_experiment(d, p, N, shots, "global", seed=seed, chunk=chunk, workers=workers)
            rows.append({"d": d, "p": p, "N": N, "shots": shots, "p_L": stats.p_L, "std_err": stats.std_err})
    return rows


def estimate_threshold(rows) -> float:
    """Mean crossing point of adjacent-distance curves, interpolating log p_L linearly in p."""
    by_d: dict[int, dict] = {}
    for r in rows:
        by_d.setdefault(r["d"], {})[r["p"]] = r["p_L"]
    ds = sorted(by_d)
    crossings = []
    for d1, d2 in zip(ds, ds[1:]):
        ps = sorted(set(by_d[d1]) & set(by_d[d2]))
        diff = [math.log(by_d[d2][p]) - math.log(by_d[d1][p]) for p in ps]
        for i in range(len(ps) - 1):
            if diff[i] < 0 <= diff[i + 1]:
                t = diff[i] / (diff[i] - diff[i + 1])
                crossings.append(ps[i] + t * (ps[i + 1] - ps[i]))
                break
    if not crossings:
        raise ValueError("the curves do not cross inside the sampled range")
    return float(np.mean(crossings))


def event_density(d: int, p: float, N: int, shots: int, seed: int = 0, chunk: int = 4096,
                  workers: int = 1) -> float:
    st = _setup(d, p, N)
    fired = sum(st.map_batches(lambda b: int(b.detectors.sum(dtype=np.int64)), shots, seed, chunk, workers))
    return fired / (shots * st.dem.indexing.num_detectors)


def write_csv(rows, path) -> None:
    if not rows:
        open(path, "w").close()
        return
    keys = list(rows[0])
    for r in rows[1:]:
        keys += [k for k in r if k not in keys]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        w.writerows(rows)
