import pytest

from qosgame.efficiency import DEFAULT
from qosgame.game import SystemParams

# filled by test_acceptance.py, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def opt():
    return DEFAULT.optimal_sir()


@pytest.fixture(scope="session")
def params():
    return SystemParams(bandwidth=5e6, noise_power=1e-13, packet_size_bits=100)
