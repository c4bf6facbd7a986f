import pytest
from hypothesis import HealthCheck, settings

from psofl.data import gen_traffic

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def tiny_traffic():
    """3 clients x 80 rows; small enough for many FL runs."""
    return gen_traffic(seed=7, n_clients=3, rows_per_client=80, lookback=6)


@pytest.fixture
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
