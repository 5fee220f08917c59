import numpy as np
import pytest

from latentprice import FilterGrid, ModelParams, SimConfig, simulate_path

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def grid():
    return FilterGrid(100)


@pytest.fixture(scope="session")
def small_theta():
    """Moderate drift with a small transformation factor."""
    return ModelParams(1.0, 0.2, 0.02, 0.1)


@pytest.fixture(scope="session")
def short_path(small_theta):
    return simulate_path(SimConfig(small_theta, 200.0, seed=5))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
