import os

import pytest
from hypothesis import HealthCheck, settings

from hartree_lab.grid import make_grid
from hartree_lab.solve import shoot_threshold, solve_nr_normalized

settings.register_profile("default", max_examples=30, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=100, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# acceptance lines collected by tests/test_acceptance.py
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


@pytest.fixture(scope="session")
def grid1000():
    return make_grid(1000, 30.0)


@pytest.fixture(scope="session")
def grid2000():
    return make_grid(2000, 30.0)


@pytest.fixture(scope="session")
def state1000(grid1000):
    return solve_nr_normalized(grid1000)


@pytest.fixture(scope="session")
def state2000(grid2000):
    return solve_nr_normalized(grid2000)


@pytest.fixture(scope="session")
def shot():
    return shoot_threshold()
