import numpy as np
import pytest

from ldrwe.environment import KernelMixture, StepKernel
from ldrwe.geometry import StepSet, build_geometry


@pytest.fixture
def pm1():
    steps = StepSet([[1], [-1]])
    return steps, build_geometry(steps)


@pytest.fixture
def uniform_pm1():
    return StepKernel([0.5, 0.5])


@pytest.fixture
def sym_mix():
    """1/2 (0.9, 0.1) + 1/2 (0.1, 0.9) on {+1, -1}."""
    return KernelMixture([(0.5, [0.9, 0.1]), (0.5, [0.1, 0.9])])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
