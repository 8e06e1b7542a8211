import pytest

from pbftaging.params import CostParams, ObjectiveWeights, SystemParams


@pytest.fixture
def defaults():
    return SystemParams()


@pytest.fixture
def costs():
    return CostParams()


@pytest.fixture
def weights():
    return ObjectiveWeights()


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS):
            terminalreporter.write_line(line)
