import pytest
from hypothesis import HealthCheck, settings

from helpers import ACCEPTANCE_LINES, make_instance

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def inst222():
    return make_instance(2, 2, 2)


@pytest.fixture(scope="session")
def inst322():
    return make_instance(3, 2, 2, C_mbps=250.0)
