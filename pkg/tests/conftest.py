import numpy as np
import pytest

from pvar.montecarlo import dgp_catalog

_CRITERIA = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_CRITERIA] = {}


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_CRITERIA, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(results):
        terminalreporter.write_line(results[key])


@pytest.fixture
def record_criterion(request):
    """Call with (number, name, passed, detail); the line is printed now and
    repeated in the terminal summary."""
    def record(number, name, passed, detail):
        line = f"criterion {number} {'PASS' if passed else 'FAIL'}: {name} | {detail}"
        print(line)
        request.config.stash[_CRITERIA][number] = line
        return passed

    return record


@pytest.fixture(scope="session")
def dgp1():
    return dgp_catalog("dgp1")


@pytest.fixture
def rng():
    return np.random.default_rng(20240101)
