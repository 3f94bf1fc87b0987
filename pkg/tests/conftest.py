import numpy as np
import pytest

from spdcsim.dispersion import REFERENCE_AREAS, REFERENCE_GRATING, default_dispersion


@pytest.fixture(scope="session")
def disp():
    return default_dispersion()


@pytest.fixture(scope="session")
def grating():
    return REFERENCE_GRATING


@pytest.fixture(scope="session")
def areas():
    return REFERENCE_AREAS


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
