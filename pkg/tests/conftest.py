import sys

import numpy as np
import pytest

from bbi.gatesynth import load_library
from bbi.lattice import LatticeConfig


@pytest.fixture(scope="session")
def config():
    return LatticeConfig.preset("rb87-1064", depth=10.0)


@pytest.fixture(scope="session")
def library():
    return load_library()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    verdicts = getattr(mod, "VERDICTS", None)
    if not verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(verdicts):
        terminalreporter.write_line(verdicts[n])
