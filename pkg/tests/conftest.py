import numpy as np
import pytest

from godelsim.geometry import ModelParams

# one line per acceptance criterion, echoed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def mp():
    """Default model parameters shared across test modules."""
    return ModelParams(omega=1.0, sigma=1.0)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(key=20260814))


def random_points(rng, n, x_bound=3.0, scale=2.0):
    """Sample coordinate points with |x| <= x_bound and O(scale) t, y, z."""
    pts = rng.uniform(-scale, scale, size=(n, 4))
    pts[:, 1] = rng.uniform(-x_bound, x_bound, size=n)
    return pts
