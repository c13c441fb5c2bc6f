"""Bit-packed container of per-window detector tensors and labels.

Layout (little-endian)::

    b"SWQD" | version:i32 | d:i32 | b:i32 | c:i32 | count:i32
    count x ( kind:u8 | label:u8 | packbits(tensor) )

A tensor has ``2b + c`` layers of ``(d+1) x (d+1)`` bits. Slot ``j`` holds
detector layer ``s_c - b + j``; slots without a detector layer are zero. The
closing layer ``N`` sits directly after round ``N-1`` when a slot is left for
it: always for final and sole windows with ``b >= 1``, never for a bulk window
whose upper buffer ends exactly at round ``N``.
Kind 4 marks whole-experiment records (``b = 0``, ``c = N + 1``, label =
observable flip).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .code_model import InvalidParameterError
from .frame_sim import SampleBatch, SyndromeSample, detector_grids
from .windowing import KIND_CODES, _graph_for, batch_labels, derive_labels

MAGIC = b"SWQD"
VERSION = 1
GLOBAL_KIND = 4
_HEADER = struct.Struct("<4s5i")


class DatasetFormatError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetHeader:
    d: int
    b: int
    c: int
    sample_count: int
    version: int = VERSION

    @property
    def layers(self) -> int:
        return 2 * self.b + self.c

    @property
    def record_size(self) -> int:
        return 2 + -(-self.layers * (self.d + 1) ** 2 // 8)


@dataclass
class WindowSampleRecord:
    window_kind: int
    label: int
    tensor: np.ndarray  # (2b+c, d+1, d+1) uint8

    def __eq__(self, other):
        return (
            isinstance(other, WindowSampleRecord)
            and self.window_kind == other.window_kind
            and self.label == other.label
            and np.array_equal(self.tensor, other.tensor)
        )


def window_tensors(grids: np.ndarray, spec) -> np.ndarray:
    """Slice ``(shots, N+1, s, s)`` grids into ``(shots, 2b+c, s, s)`` window tensors."""
    b, N = spec.b, spec.num_rounds
    shots, _, s, _ = grids.shape
    out = np.zeros((shots, 2 * b + spec.c, s, s), dtype=np.uint8)
    base = spec.core[0] - b
    lo, hi = spec.full
    out[:, lo - base : hi - base] = grids[:, lo:hi]
    if hi == N and N - base < out.shape[1]:
        out[:, N - base] = grids[:, N]
    return out


def _batches(samples, dem, specs):
    if isinstance(samples, (SampleBatch, SyndromeSample)):
        samples = [samples]
    for s in samples:
        if isinstance(s, SampleBatch):
            if not dem.mechanisms:
                # noiseless model: nothing can flip a label, and there is no graph to build
                yield s.detectors, np.zeros((s.num_shots, len(specs)), dtype=np.uint8), s.observable
                continue
            yield s.detectors, batch_labels(s, _graph_for(dem), specs), s.observable
        else:
            lab = derive_labels(s, dem, specs)
            yield np.asarray(s.detectors)[None, :], lab.y[None, :], np.array([s.observable_flip])


def _pack(kinds: np.ndarray, labels: np.ndarray, tensors: np.ndarray) -> bytes:
    n = len(kinds)
    bits = np.packbits(tensors.reshape(n, -1), axis=1)
    rec = np.concatenate([kinds[:, None].astype(np.uint8), labels[:, None].astype(np.uint8), bits], axis=1)
    return rec.tobytes()


def export_windows(samples, dem, specs, path) -> int:
    """Write one record per (shot, window), windows interleaved in shot order."""
    specs = list(specs)
    if not specs:
        raise InvalidParameterError("no windows")
    b, c = specs[0].b, specs[0].c
    if specs[-1].full[1] == specs[-1].num_rounds and b == 0:
        raise InvalidParameterError("export needs b >= 1 so the closing detector layer has a slot")
    idx = dem.indexing
    d = int(idx.grid_pos.max())
    kinds_row = np.array([KIND_CODES[s.kind] for s in specs], dtype=np.uint8)
    count = 0
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, d, b, c, 0))
        for det, labels, _ in _batches(samples, dem, specs):
            grids = detector_grids(det, idx)
            n = det.shape[0]
            tensors = np.stack([window_tensors(grids, s) for s in specs], axis=1)
            fh.write(_pack(np.tile(kinds_row, n), labels.reshape(-1), tensors.reshape(n * len(specs), *tensors.shape[2:])))
            count += n * len(specs)
        fh.seek(0)
        fh.write(_HEADER.pack(MAGIC, VERSION, d, b, c, count))
    return count


def export_global(samples, dem, path) -> int:
    """Write whole-experiment records (kind 4) with the observable flip as label."""
    idx = dem.indexing
    d = int(idx.grid_pos.max())
    N = idx.num_rounds
    count = 0
    if isinstance(samples, (SampleBatch, SyndromeSample)):
        samples = [samples]
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, d, 0, N + 1, 0))
        for s in samples:
            if isinstance(s, SampleBatch):
                det, obs = s.detectors, s.observable
            else:
                det, obs = np.asarray(s.detectors)[None, :], np.array([s.observable_flip])
            n = det.shape[0]
            fh.write(_pack(np.full(n, GLOBAL_KIND, dtype=np.uint8), obs, detector_grids(det, idx)))
            count += n
        fh.seek(0)
        fh.write(_HEADER.pack(MAGIC, VERSION, d, 0, N + 1, count))
    return count


def read_header(path) -> DatasetHeader:
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
    return _parse_header(raw)


def _parse_header(raw: bytes) -> DatasetHeader:
    if len(raw) < _HEADER.size or raw[:4] != MAGIC:
        raise DatasetFormatError("bad magic")
    _, version, d, b, c, count = _HEADER.unpack(raw[: _HEADER.size])
    if version != VERSION:
        raise DatasetFormatError(f"unsupported version {version}")
    if d < 1 or b < 0 or c < 1 or count < 0:
        raise DatasetFormatError("corrupt header")
    return DatasetHeader(d, b, c, count, version)


def load_dataset(path) -> tuple[DatasetHeader, np.ndarray, np.ndarray, np.ndarray]:
    """Whole file as arrays ``(header, kinds, labels, tensors)``."""
    with open(path, "rb") as fh:
        data = fh.read()
    h = _parse_header(data)
    body = np.frombuffer(data, dtype=np.uint8, offset=_HEADER.size)
    if len(body) != h.sample_count * h.record_size:
        raise DatasetFormatError(
            f"truncated or oversized body: {len(body)} bytes for {h.sample_count} records of {h.record_size}"
        )
    rec = body.reshape(h.sample_count, h.record_size)
    s = h.d + 1
    nbits = h.layers * s * s
    tensors = np.unpackbits(rec[:, 2:], axis=1, count=nbits).reshape(h.sample_count, h.layers, s, s)
    return h, rec[:, 0].copy(), rec[:, 1].copy(), tensors


def read_dataset(path):
    """Iterator of :class:`WindowSampleRecord`; the whole file is validated up front."""
    _, kinds, labels, tensors = load_dataset(path)
    return (WindowSampleRecord(int(k), int(y), t) for k, y, t in zip(kinds, labels, tensors))
