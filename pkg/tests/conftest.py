import pytest

from pedfusion.pipeline import calibrate
from pedfusion.sim import ScenarioConfig

ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture(scope="session")
def calibration():
    return calibrate(ScenarioConfig())


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
