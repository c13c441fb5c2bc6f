"""Streaming window dispatch over a worker pool and a discrete-event latency model."""

from __future__ import annotations

import heapq
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .code_model import InvalidParameterError
from .frame_sim import SampleBatch
from .windowing import SlidingWindowPipeline


@dataclass(frozen=True)
class StreamConfig:
    t_window: float
    workers: int = 1
    b: int = 0
    c: int = 1
    t_round: float = 1.0  # microseconds

    def __post_init__(self):
        if self.t_round <= 0 or self.t_window < 0 or self.workers < 1 or self.c < 1 or self.b < 0:
            raise InvalidParameterError(f"invalid stream configuration {self}")

    @property
    def sufficient(self) -> bool:
        """Throughput keeps up with syndrome generation."""
        return self.t_window <= self.workers * self.c * self.t_round

    @property
    def predicted_slope(self) -> float:
        """Latency growth per round (0 when throughput is sufficient)."""
        if self.sufficient:
            return 0.0
        return self.t_window / (self.workers * self.c) - self.t_round


@dataclass
class LatencyTrace:
    ready: np.ndarray
    start: np.ndarray
    finish: np.ndarray
    rounds: np.ndarray
    generated_time: np.ndarray
    decoded_through_time: np.ndarray
    max_queue: int
    config: StreamConfig | None = None

    @property
    def latency(self) -> np.ndarray:
        return self.decoded_through_time - self.generated_time

    @property
    def peak_latency(self) -> float:
        return float(self.latency.max())

    @property
    def window_latency(self) -> np.ndarray:
        """Finish time minus the generation time of each window's last core round."""
        last = np.minimum((np.arange(len(self.finish)) + 1) * self.config.c, len(self.rounds)) - 1
        return self.finish - self.generated_time[last]

    @property
    def asymptotic_latency(self) -> float:
        wl = self.window_latency
        if len(wl) > 2:
            wl = wl[:-1]  # the final window is cut short by the end of the experiment
        return float(wl[len(wl) // 2 :].mean())

    def slope(self, from_round: int = 0) -> float:
        """Least-squares latency growth per round over rounds >= ``from_round``."""
        sel = self.rounds >= from_round
        return float(np.polyfit(self.rounds[sel], self.latency[sel], 1)[0])

    @property
    def bounded(self) -> bool:
        return self.config.sufficient

    def to_csv(self, target) -> None:
        """Write one row per round to a path or an open text file."""
        if hasattr(target, "write"):
            self._write_csv(target)
        else:
            with open(target, "w") as fh:
                self._write_csv(fh)

    def _write_csv(self, fh) -> None:
        fh.write("round,generated_time,decoded_through_time,latency_us\n")
        for r, g, d, lat in zip(self.rounds, self.generated_time, self.decoded_through_time, self.latency):
            fh.write(f"{r},{g:.6f},{d:.6f},{lat:.6f}\n")


def window_ready_rounds(num_rounds: int, b: int, c: int) -> np.ndarray:
    """Number of rounds that must have arrived before each window can start."""
    m = math.ceil(num_rounds / c)
    return np.minimum((np.arange(m) + 1) * c + b, num_rounds)


def simulate_latency(config: StreamConfig, num_rounds: int) -> LatencyTrace:
    """FIFO dispatch of windows onto ``workers`` servers with deterministic service time.

    Round ``r`` is generated at time ``(r + 1) * t_round``; a round counts as
    decoded once every window whose core starts at or before it has finished.
    """
    if num_rounds < 1:
        raise InvalidParameterError("need at least one round")
    c, W = config.c, config.workers
    ready = window_ready_rounds(num_rounds, config.b, c) * config.t_round
    m = len(ready)
    start = np.empty(m)
    servers = [0.0] * W
    heapq.heapify(servers)
    for i in range(m):
        free = heapq.heappop(servers)
        start[i] = max(ready[i], free)
        heapq.heappush(servers, start[i] + config.t_window)
    finish = start + config.t_window

    # windows that are ready but not yet started, sampled at every arrival
    waiting = np.searchsorted(ready, ready, side="right") - np.searchsorted(np.sort(start), ready, side="right")
    max_queue = int(waiting.max())
    rounds = np.arange(num_rounds)
    owner = rounds // c
    through = np.maximum.accumulate(finish)[owner]
    return LatencyTrace(ready, start, finish, rounds, (rounds + 1) * config.t_round, through, int(max_queue), config)


# ---------------------------------------------------------------------------
# threaded streaming


def run_stream(source, pipeline: SlidingWindowPipeline, config: StreamConfig) -> tuple[np.ndarray, LatencyTrace]:
    """Decode every window of every shot on a pool of ``config.workers`` threads.

    Windows are submitted in the order their last round arrives and the pool
    serves them first-in first-out. The returned bits are the XOR of the window
    outputs and do not depend on the number of workers or the completion
    order. The trace records measured wall-clock times in microseconds.
    """
    det = source.detectors if isinstance(source, SampleBatch) else np.asarray(source)
    z = np.ascontiguousarray(det[:, : pipeline.graph.num_nodes], dtype=np.uint8)
    m = len(pipeline.windows)
    order = np.argsort([s.full[1] for s in pipeline.specs], kind="stable")
    t0 = time.perf_counter()
    stamps = np.zeros((m, 3))

    def task(i):
        stamps[i, 1] = time.perf_counter() - t0
        res = pipeline.decode_window_batch(i, z)
        stamps[i, 2] = time.perf_counter() - t0
        return i, (res.bits >> 1) & 1

    y_hat = np.zeros((z.shape[0], m), dtype=np.uint8)
    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        futures = []
        for i in order:
            stamps[i, 0] = time.perf_counter() - t0
            futures.append(pool.submit(task, int(i)))
        for f in futures:
            i, bits = f.result()
            y_hat[:, i] = bits
    combined = np.bitwise_xor.reduce(y_hat, axis=1) if m else np.zeros(z.shape[0], dtype=np.uint8)
    us = stamps * 1e6
    N = pipeline.graph.num_rounds
    rounds = np.arange(N)
    owner = np.minimum(rounds // pipeline.specs[0].c, m - 1)
    through = np.maximum.accumulate(us[:, 2])[owner]
    trace = LatencyTrace(us[:, 0], us[:, 1], us[:, 2], rounds, np.zeros(N), through, 0, config)
    return combined, trace
