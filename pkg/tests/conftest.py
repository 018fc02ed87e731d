import numpy as np
import pytest

from crlab.grid import GridSpec
from crlab.structure import heisenberg, solve_structure


@pytest.fixture(scope="session")
def spec16():
    return GridSpec((16, 16, 16))


@pytest.fixture(scope="session")
def flat16(spec16):
    return solve_structure(heisenberg(1, spec16))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
