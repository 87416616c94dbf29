import numpy as np
import pytest

from ddimlab import process as P
from ddimlab import score as SC
from ddimlab.laws import IsotropicGaussian


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def ou():
    return P.ou_standard()


@pytest.fixture
def ou_n04(ou):
    """OU process with N(0, 4) data and its analytic score field."""
    return ou, SC.analytic_score_field(ou, IsotropicGaussian([0.0], 4.0))


@pytest.fixture
def ou_stationary(ou):
    return ou, SC.analytic_score_field(ou, IsotropicGaussian([0.0], 1.0))


def frozen_process(dim=1):
    """Zero drift and zero diffusion."""
    return P.custom(lambda t, x: np.zeros_like(x), lambda t: 0.0, dim)


def drift_free(g=1.0, dim=1):
    return P.custom(lambda t, x: np.zeros_like(x), lambda t: g, dim)
