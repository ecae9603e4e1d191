import time
from types import SimpleNamespace

import numpy as np
import pytest

from kernadapt.data import Dataset
from kernadapt.harness import ExperimentConfig, run_adaptive_experiment
from kernadapt.modelsel import default_lambda_grid


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


def random_dataset(rng, m, n=2, l=1, spread=2.0):
    X = rng.uniform(-spread, spread, size=(m, n))
    Y = rng.normal(size=(m, l))
    return Dataset(X, Y)


@pytest.fixture(scope="session")
def per_point_protocol():
    """Per-point widths, m=50, 15 iterations: fixed lambda=0.005 and the 13-point sweep."""
    start = time.perf_counter()
    fixed = run_adaptive_experiment(
        ExperimentConfig(method="adaptive_per_point", m=50, seed=0, lam=0.005, iterations=15))
    sweep = run_adaptive_experiment(
        ExperimentConfig(method="adaptive_per_point", m=50, seed=0, iterations=15,
                         lambda_grid=tuple(default_lambda_grid())))
    return SimpleNamespace(fixed=fixed, sweep=sweep, seconds=time.perf_counter() - start)


ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = []


@pytest.fixture
def criterion(request):
    """Context manager that times a criterion and logs one PASS/FAIL line for it."""
    from contextlib import contextmanager

    lines = request.config.stash[ACCEPTANCE]

    @contextmanager
    def run(number, title, limit, extra_seconds=0.0):
        start = time.perf_counter()
        status = "FAIL"
        detail = {"note": ""}
        try:
            yield detail
            elapsed = time.perf_counter() - start + extra_seconds
            assert elapsed < limit, f"took {elapsed:.1f}s, limit {limit}s"
            status = "PASS"
        finally:
            elapsed = time.perf_counter() - start + extra_seconds
            line = f"{status} criterion {number}: {title} ({elapsed:.1f}s) {detail['note']}".rstrip()
            lines.append((number, line))
            print(line)

    return run


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
