import functools

import pytest

from swmatch.code_model import build_layout, build_memory_circuit
from swmatch.dem import build_z_graph, extract_dem


@functools.lru_cache(maxsize=None)
def setup(d, N, p):
    """(circuit, dem, graph), cached across the whole session."""
    circuit = build_memory_circuit(build_layout(d), N, p)
    dem = extract_dem(circuit)
    return circuit, dem, build_z_graph(dem) if p > 0 else None


@pytest.fixture(scope="session")
def d3():
    return setup(3, 9, 0.005)


@pytest.fixture(scope="session")
def d5():
    return setup(5, 15, 0.003)


ACCEPTANCE_LINES = []


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line per acceptance criterion; call with (ok, detail)."""

    def record(ok, detail):
        ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'} {request.node.name}: {detail}")
        print(ACCEPTANCE_LINES[-1])
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
