import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lscf.grid import build_grid

settings.register_profile("lscf", deadline=None, max_examples=30,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("lscf")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def grid1d():
    return build_grid(1, 4, 64, 0.1)


def two_value(grid, lo=1.0, hi=1.2):
    """Potential equal to ``lo`` on the first half of the axis-0 cells and ``hi`` elsewhere."""
    x = grid.coords()[0]
    return np.where(x < grid.L / 2, lo, hi)


# One line per acceptance criterion, echoed in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
