import numpy as np
import pytest

from cpsad.numerics import SeededRng


@pytest.fixture
def rng():
    return SeededRng(1234)


def binomial_sigma(p, n):
    return np.sqrt(p * (1 - p) / n)
