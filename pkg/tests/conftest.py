import os
import time

import pytest

from retention.geometry import GeometrySpec, make_ring
from retention.optimizer import OptimizationProblem, multi_start
from retention.surrogate import SurrogateParams

ACCEPTANCE_LINES: list[str] = []

MASTER_SEED = 2024
N_RUNS = int(os.environ.get("RETENTION_ACCEPTANCE_RUNS", "100"))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def acceptance_log():
    def record(label: str, ok: bool | None, detail: str) -> bool | None:
        status = "NOTE" if ok is None else "PASS" if ok else "FAIL"
        line = f"[{status}] {label}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


@pytest.fixture(scope="session")
def optimization_batches():
    """Multi-start batches from the n=12, a=0.45 ring at r_min = 0.1 and 0.2."""
    seed = make_ring(GeometrySpec("ring", 12, 0.45))
    workers = max(1, min(os.cpu_count() or 1, 8))
    out = {}
    for r_min in (0.1, 0.2):
        problem = OptimizationProblem(seed, r_min=r_min, params=SurrogateParams(1.0, 3.0))
        t0 = time.perf_counter()
        batch = multi_start(problem, N_RUNS, 0.01, MASTER_SEED, workers=workers)
        out[r_min] = (problem, batch, time.perf_counter() - t0)
    return out
