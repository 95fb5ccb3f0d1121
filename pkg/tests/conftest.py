import pytest

from floorline.absorption import enumerate_sets
from floorline.code_model import tanner_155

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def tanner():
    return tanner_155()


@pytest.fixture(scope="session")
def tanner_82_sets(tanner):
    return enumerate_sets(tanner, 8, 2, qc_symmetry=31).of(8, 2)


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
