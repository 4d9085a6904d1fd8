from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hjsystems.core import TorusGrid
from hjsystems.coupling import validate
from hjsystems.critical import SystemProblem
from hjsystems.hamiltonian import HamiltonianComponent, Mode, TrigPotential
from hjsystems.problem import load_problem

PROBLEMS = Path(__file__).resolve().parents[1] / "problems"

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def cosine(amplitude=1.0, k=1, dim=1):
    wv = (k,) if dim == 1 else (k, 0)
    return HamiltonianComponent(TrigPotential(0.0, (Mode(wv, amplitude),), dim))


def flat(dim=1):
    return HamiltonianComponent(TrigPotential(0.0, (), dim))


def scalar_system(n=256, comp=None):
    return SystemProblem(TorusGrid(1, n), (comp or cosine(),), validate([[0.0]]))


def symmetric_system(n=256, comps=None):
    comps = comps or (cosine(), cosine())
    return SystemProblem(TorusGrid(1, n), comps, validate([[1.0, -1.0], [-1.0, 1.0]]))


def random_coupling(rng, m, density=1.0):
    """Row-sum-zero matrix with off-diagonals in [-2, 0); a cycle keeps it irreducible."""
    off = -rng.uniform(0.1, 2.0, (m, m)) * (rng.random((m, m)) < density)
    for i in range(m):
        off[i, (i + 1) % m] = -rng.uniform(0.1, 2.0)
    np.fill_diagonal(off, 0.0)
    return off - np.diag(off.sum(axis=1))


@lru_cache(maxsize=None)
def reference_run(name: str, n: int | None = None):
    """Full pipeline on a shipped problem file; cached across the session."""
    from hjsystems.pipeline import run_problem

    prob = load_problem(PROBLEMS / f"{name}.json")
    if n is not None:
        prob = prob.with_grid(n)
    return run_problem(prob)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    assert ok, detail


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
