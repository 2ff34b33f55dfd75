import numpy as np
import pytest

from pafit import measures as M


@pytest.fixture
def two_point():
    """mu = {0.5 -> 0.5, 1.0 -> 0.5}; fit-get-richer at lambda = 2."""
    return M.FiniteDiscrete([(0.5, 0.5), (1.0, 0.5)])


@pytest.fixture
def cubic_gap():
    """Density 3(1-f)^2 on (0, 1); Bose-Einstein at lambda = 1."""
    return M.PiecewiseDensity((0.0, 1.0), ((3.0, -6.0, 3.0),))


@pytest.fixture
def uniform():
    return M.Uniform01()


@pytest.fixture
def beta23():
    return M.BetaShape(2.0, 3.0)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(20240810))
