import numpy as np
import pytest

from oamtomo.hilbert import Dimension, StateVector, density_from_state


@pytest.fixture
def dim7():
    return Dimension.from_d(7)


@pytest.fixture
def dim5():
    return Dimension.from_d(5)


def random_pure(dim, seed):
    rng = np.random.default_rng(seed)
    c = rng.normal(size=dim.d) + 1j * rng.normal(size=dim.d)
    return StateVector(dim, c / np.linalg.norm(c))


def random_pure_density(dim, seed):
    return density_from_state(random_pure(dim, seed))
