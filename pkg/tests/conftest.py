import numpy as np
import pytest
from hypothesis import settings

from degmart import RngSpec, TimeGrid, builtin_model, sample_brownian, simulate

settings.register_profile("degmart", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("degmart")

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def within_3se(est, target, atol=1e-9):
    return abs(est.mean - target) <= 3 * est.std_error + atol


@pytest.fixture
def grid64():
    return TimeGrid(64)


@pytest.fixture(scope="session")
def m2_batch():
    """M2 paths shared by several statistical tests: (B, X) at N=64, 1e5 paths."""
    return simulate(builtin_model("M2"), TimeGrid(64), 100_000, seed=11)


@pytest.fixture
def brownian():
    def make(n_steps, d, n_paths, seed=0):
        return sample_brownian(TimeGrid(n_steps), d, n_paths, RngSpec(seed))
    return make


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
