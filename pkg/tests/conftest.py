import numpy as np
import pytest

from dickeqfr import DickeParams


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def small_params(N=2, n_max=12, g=1.3, alpha=0.0, omega_b=3.0, omega_at=10.0):
    return DickeParams(N=N, omega_b=omega_b, omega_at=omega_at, g=g, alpha=alpha, n_max=n_max)
