import copy

import pytest

SMALL_DOC = {
    "schema_version": 1,
    "name": "three-node",
    "graph": {"n_nodes": 3, "edges": [[1, 2], [2, 3], [3, 1]]},
    "plant": {
        "A": [[0.0, 1.0], [-1.0, -0.3]],
        "B": [[[0.0], [1.0]], [[1.0], [0.0]], [[1.0], [1.0]]],
        "C": [[[1.0, 0.0]], [[0.0, 1.0]], [[1.0, -1.0]]],
        "x0": [1.0, -2.0],
    },
    "synthesis": {"method": "centralized", "T1": 1.0, "T2": 1.0},
    "nodes": {"mode": "nominal", "mu": 0.5, "gamma0": 0.5},
    "integrator": {"dt": 0.01, "t_final": 2.0, "method": "rk4", "record_every": 10},
    "outputs": {"formats": ["csv", "gnuplot"]},
}


@pytest.fixture
def small_doc():
    return copy.deepcopy(SMALL_DOC)


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_report(capsys):
    def report(label, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok
    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
