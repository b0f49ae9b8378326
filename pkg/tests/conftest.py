import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ricci_lab.flow import FlowConfig, make_state
from ricci_lab.grid import make_grid
from ricci_lab.initial_data import conformal_bump, random_smooth

settings.register_profile(
    "lab", max_examples=15, deadline=None, suppress_health_check=[HealthCheck.too_slow], derandomize=True
)
settings.load_profile("lab")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def grid2():
    return make_grid(2, 32)


@pytest.fixture
def bump_state(grid2):
    g, phi, u = conformal_bump(2).fields(grid2)
    return make_state(grid2, g, phi, u)


@pytest.fixture
def random_state(grid2):
    g, phi, u = random_smooth(2, seed=3).fields(grid2)
    return make_state(grid2, g, phi, u)


@pytest.fixture
def flow_cfg():
    return FlowConfig(a=0.5, B=0.3)


def rel_err(a, b):
    return float(np.max(np.abs(a - b))) / max(float(np.max(np.abs(b))), 1e-300)
