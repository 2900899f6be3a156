import numpy as np
import pytest

from bumphunt.datagen import Dataset, MixtureConfig, sample_mixture


def gaussian_data(p=2, seed=0, n=1000, **kwargs):
    """Single-Gaussian design used throughout: equicorrelated predictors,
    response N(1, 0.2^2)."""
    return sample_mixture(MixtureConfig.gaussian_design(p, n, **kwargs), seed)


@pytest.fixture
def data2():
    return gaussian_data(2, seed=11)


@pytest.fixture
def line_data():
    """x = 1..20 on one axis with response equal to x."""
    x = np.arange(1.0, 21.0)
    return Dataset(x[:, None], x.copy())
