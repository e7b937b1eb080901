import pytest

from damped_blowup import acceptance

ACCEPTANCE_LINES = {}


@pytest.fixture(scope="session")
def run7():
    """The n=3, p=2, eps=1 bump simulation, shared across modules."""
    return acceptance.simulation(1.0)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
