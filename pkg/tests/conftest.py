import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from stochfeyn.evolve import PhysConfig
from stochfeyn.grid import GridSpec
from stochfeyn.states import Potential

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# filled by tests/test_acceptance.py, printed at the end of the run
ACCEPTANCE_LINES = {}


@pytest.fixture(scope="session")
def grid():
    return GridSpec()


@pytest.fixture(scope="session")
def free_cfg():
    return PhysConfig()


@pytest.fixture(scope="session")
def harm_cfg():
    return PhysConfig(potential=Potential.harmonic())


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
