import pytest
from hypothesis import settings

from helpers import ACCEPTANCE, config
from manegeo.potentials import newtonian, zero

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture
def kepler():
    return newtonian([1.0, 1.0])


@pytest.fixture
def free():
    return zero([1.0, 1.0])


@pytest.fixture
def kepler_pair():
    return config([[-1, 0], [1, 0]]), config([[0, -3], [2, 3]])


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, line = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {line}")
