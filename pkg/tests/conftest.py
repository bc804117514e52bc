import functools

import numpy as np
import pytest

from purelind.lindblad import TimeGrid, propagate_lindblad
from purelind.purified import propagate_nlse, purify_initial
from purelind.spinmodel import initial_state, benchmark_model

BENCHMARK_T_END = 630.0
BENCHMARK_STEPS = 2800  # dt = 0.225

_acceptance_lines: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(_acceptance_lines):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def acceptance():
    """``record(number, ok, detail)`` prints and stores one pass/fail line."""

    def record(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        _acceptance_lines.append(line)

    return record


@functools.lru_cache(maxsize=None)
def _benchmark_runs(steps: int):
    model = benchmark_model()
    grid = TimeGrid(0.0, BENCHMARK_T_END, steps)
    rho0 = initial_state()
    lind = propagate_lindblad(model, rho0, grid)
    nlse = propagate_nlse(model, purify_initial(rho0), grid)
    return model, grid, lind, nlse


@pytest.fixture(scope="session")
def benchmark_runs():
    """``steps -> (model, grid, lindblad, nlse)`` on the benchmark, cached per session."""
    return _benchmark_runs


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_matrix(rng, n, m=None):
    m = n if m is None else m
    return rng.normal(size=(n, m)) + 1j * rng.normal(size=(n, m))


def random_hermitian(rng, n):
    a = random_matrix(rng, n)
    return 0.5 * (a + a.conj().T)


def random_density(rng, n, rank=None):
    rank = n if rank is None else rank
    a = random_matrix(rng, n, rank)
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


def random_unitary(rng, n):
    q, r = np.linalg.qr(random_matrix(rng, n))
    return q * (np.diag(r) / np.abs(np.diag(r)))
