import numpy as np
import pytest

from fedgem.core import Dataset, LocalModel


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_instance(rng, n_max=50, d_max=5):
    """Random data, model and responsibilities for one client."""
    n = int(rng.integers(3, n_max + 1))
    d = int(rng.integers(1, d_max + 1))
    k = int(rng.integers(2, 4))
    x = rng.normal(scale=3.0, size=(n, d))
    theta = x[rng.choice(n, size=k, replace=False)] + rng.normal(size=(k, d))
    return Dataset(x), LocalModel.equal_weights(theta)


@pytest.fixture
def two_blobs_1d(rng):
    x = np.concatenate([rng.normal(-5, 1, 200), rng.normal(5, 1, 200)])
    return Dataset(x.reshape(-1, 1), np.repeat([0, 1], 200))


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_log():
    """Collects one pass/fail line per acceptance criterion."""
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
