import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from besselpde import semigroup
from besselpde.mspace import default_x_max, make_grid

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

X_MAX = default_x_max(1.0, 4.0)


@pytest.fixture(scope="session")
def grid_half():
    """delta = 0.5 graded grid on the acceptance truncation (T=1, support radius 4)."""
    return make_grid(0.5, X_MAX, 512)


@pytest.fixture(scope="session")
def grid_half_coarse():
    return make_grid(0.5, X_MAX, 256)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(autouse=True, scope="module")
def _fresh_kernel_cache():
    yield
    semigroup.clear_cache()
