"""Rotated surface-code layout and the noisy memory-Z syndrome extraction circuit."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

# Data-qubit corners of a plaquette, as (row, col) offsets from its grid position.
NW, NE, SW, SE = (-1, -1), (-1, 0), (0, -1), (0, 0)

# CNOT order per plaquette basis. Both schedules share the first and last step,
# which keeps X and Z checks commuting. X checks end on a vertical pair so their
# hook errors run perpendicular to the horizontal X logical; Z checks end on a
# horizontal pair for the same reason with respect to the vertical Z logical.
Z_ORDER = (NW, NE, SW, SE)
X_ORDER = (NW, SW, NE, SE)


class InvalidParameterError(ValueError):
    """A construction parameter is out of its allowed range."""


@dataclass(frozen=True)
class Stabilizer:
    basis: str  # "Z" or "X"
    grid_pos: tuple[int, int]
    support: tuple[int, ...]
    corners: dict  # offset -> data qubit id
    qubit: int  # ancilla qubit id

    @property
    def weight(self) -> int:
        return len(self.support)


@dataclass(frozen=True)
class CodeLayout:
    """Geometry of a distance-``d`` rotated surface code.

    Data qubit ``(i, j)`` has id ``i * d + j``. Plaquettes live on a
    ``(d+1) x (d+1)`` grid; grid cell ``(r, c)`` touches data qubits
    ``(r-1, c-1) .. (r, c)``. Z-type boundaries are the top and bottom rows,
    X-type boundaries the left and right columns, so the Z logical is a
    vertical string and is fixed to the leftmost data column.
    """

    d: int
    data_qubits: tuple[tuple[int, int], ...]
    z_stabilizers: tuple[Stabilizer, ...]
    x_stabilizers: tuple[Stabilizer, ...]
    z_logical_support: frozenset

    @property
    def num_data(self) -> int:
        return self.d * self.d

    @property
    def num_qubits(self) -> int:
        return self.num_data + len(self.z_stabilizers) + len(self.x_stabilizers)

    @property
    def stabilizers(self) -> tuple[Stabilizer, ...]:
        return self.z_stabilizers + self.x_stabilizers


def _plaquette_basis(r: int, c: int, d: int) -> str | None:
    """Basis of the plaquette at grid cell (r, c), or None if absent."""
    basis = "Z" if (r + c) % 2 == 1 else "X"
    on_row_edge = r in (0, d)
    on_col_edge = c in (0, d)
    if on_row_edge and on_col_edge:
        return None
    if on_row_edge:
        return basis if basis == "Z" else None
    if on_col_edge:
        return basis if basis == "X" else None
    return basis


def build_layout(d: int) -> CodeLayout:
    if not isinstance(d, int) or d < 3 or d % 2 == 0:
        raise InvalidParameterError(f"code distance must be an odd integer >= 3, got {d!r}")
    data = tuple((i, j) for i in range(d) for j in range(d))
    found: dict[str, list] = {"Z": [], "X": []}
    for r in range(d + 1):
        for c in range(d + 1):
            basis = _plaquette_basis(r, c, d)
            if basis is None:
                continue
            corners = {}
            for off in (NW, NE, SW, SE):
                i, j = r + off[0], c + off[1]
                if 0 <= i < d and 0 <= j < d:
                    corners[off] = i * d + j
            found[basis].append(((r, c), corners))

    nd = d * d
    z_stabs = []
    for k, (pos, corners) in enumerate(found["Z"]):
        z_stabs.append(Stabilizer("Z", pos, tuple(sorted(corners.values())), corners, nd + k))
    nz = len(z_stabs)
    x_stabs = []
    for k, (pos, corners) in enumerate(found["X"]):
        x_stabs.append(Stabilizer("X", pos, tuple(sorted(corners.values())), corners, nd + nz + k))
    logical = frozenset(i * d for i in range(d))
    return CodeLayout(d, data, tuple(z_stabs), tuple(x_stabs), logical)


@dataclass(frozen=True)
class Op:
    """One circuit operation. ``noise`` is the strength of the channel that follows it."""

    kind: str  # RZ, RX, CX, MZ, MX, I
    qubits: tuple[int, ...]
    record: int = -1
    noise: float = 0.0

    def __str__(self) -> str:
        args = " ".join(str(q) for q in self.qubits)
        rec = f" rec[{self.record}]" if self.record >= 0 else ""
        return f"{self.kind}({self.noise:g}) {args}{rec}"


@dataclass(eq=False)
class Circuit:
    layout: CodeLayout
    num_rounds: int
    p: float
    timesteps: list[list[Op]] = field(default_factory=list)
    record_count: int = 0
    # measurement-record bookkeeping used to define detectors
    ancilla_records: list[dict[int, int]] = field(default_factory=list)  # per round: ancilla -> record
    data_records: dict[int, int] = field(default_factory=dict)

    def operations(self) -> Iterator[tuple[int, Op]]:
        for t, step in enumerate(self.timesteps):
            for op in step:
                yield t, op

    def dump(self) -> str:
        """Line-oriented text: one timestep per line, operations separated by ``;``."""
        return "\n".join("; ".join(str(op) for op in step) for step in self.timesteps) + "\n"


def build_memory_circuit(layout: CodeLayout, num_rounds: int, p: float) -> Circuit:
    if num_rounds < 1:
        raise InvalidParameterError(f"need at least one round, got {num_rounds}")
    if not 0.0 <= p < 0.5:
        raise InvalidParameterError(f"noise strength must lie in [0, 0.5), got {p}")

    circuit = Circuit(layout, num_rounds, float(p))
    data = list(range(layout.num_data))
    all_qubits = set(range(layout.num_qubits))
    ancillas = [s.qubit for s in layout.stabilizers]
    steps = circuit.timesteps
    rec = 0

    steps.append([Op("RZ", (q,), noise=p) for q in data])
    for _ in range(num_rounds):
        step = [Op("RZ" if s.basis == "Z" else "RX", (s.qubit,), noise=p) for s in layout.stabilizers]
        step += [Op("I", (q,), noise=p) for q in data]
        steps.append(step)

        for k in range(4):
            step = []
            busy = set()
            for s in layout.stabilizers:
                off = (Z_ORDER if s.basis == "Z" else X_ORDER)[k]
                q = s.corners.get(off)
                if q is None:
                    continue
                pair = (q, s.qubit) if s.basis == "Z" else (s.qubit, q)
                step.append(Op("CX", pair, noise=p))
                busy.update(pair)
            step += [Op("I", (q,), noise=p) for q in sorted(all_qubits - busy)]
            steps.append(step)

        step = []
        records = {}
        for s in layout.stabilizers:
            step.append(Op("MZ" if s.basis == "Z" else "MX", (s.qubit,), record=rec, noise=p))
            records[s.qubit] = rec
            rec += 1
        step += [Op("I", (q,), noise=p) for q in data]
        steps.append(step)
        circuit.ancilla_records.append(records)

    step = []
    for q in data:
        step.append(Op("MZ", (q,), record=rec, noise=p))
        circuit.data_records[q] = rec
        rec += 1
    steps.append(step)
    circuit.record_count = rec
    assert set(ancillas) == set(circuit.ancilla_records[0])
    return circuit
