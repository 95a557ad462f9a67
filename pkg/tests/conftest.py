import numpy as np
import pytest

from reebflow.contact import ReebField
from reebflow.hamiltonian import HamiltonianStack
from reebflow.profiles import GOLDEN_CONJUGATE, ProfileFamily

S = GOLDEN_CONJUGATE
K = (1.0 + S) / 2.0


@pytest.fixture(scope="session")
def family():
    return ProfileFamily()


@pytest.fixture(scope="session")
def stack():
    return HamiltonianStack()


@pytest.fixture(scope="session")
def field(stack):
    return ReebField(stack)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
