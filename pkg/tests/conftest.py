import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from losguide import cinematography_default, relative_nav_default
from tests.helpers import ACCEPTANCE_REPORT

warnings.filterwarnings("ignore", category=RuntimeWarning, module="numba")

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def nav():
    return relative_nav_default()


@pytest.fixture(scope="session")
def cine():
    return cinematography_default()


@pytest.fixture
def rng():
    return np.random.default_rng(20240517)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_REPORT:
        terminalreporter.section("acceptance measurements")
        for line in ACCEPTANCE_REPORT:
            terminalreporter.write_line(line)
