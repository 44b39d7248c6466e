import numpy as np
import pytest

from roughctl.signal import FbmSpec, fbm_generate


@pytest.fixture(scope="session")
def fbm_1024():
    return fbm_generate(FbmSpec(0.7, 1.0, 1024, seed=0))


@pytest.fixture(scope="session")
def fbm_4096():
    return fbm_generate(FbmSpec(0.7, 1.0, 4096, seed=0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import LINES
    except ImportError:
        return
    if LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(LINES):
            terminalreporter.write_line(LINES[k])
