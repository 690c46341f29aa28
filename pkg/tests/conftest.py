import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def complex_normal(rng, shape):
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)
