import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for the oracles module

from fieldswarm.envgen import FbfParams, generate_fbf
from fieldswarm.grid import GridSpec, ObstacleMask

# verdict lines recorded by test_acceptance.check; replayed after capture
# ends so they survive a plain `pytest` run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def spec20():
    return GridSpec(rows=20, cols=20, cell_size_m=1.0)


@pytest.fixture
def open20(spec20):
    return ObstacleMask.open(spec20)


@pytest.fixture
def truth20(spec20):
    return generate_fbf(FbfParams(spec=spec20, seed=11, hurst=0.7))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
