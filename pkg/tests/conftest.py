import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hyperbolic_nbody.core import MassSystem

settings.register_profile(
    "default", deadline=None, max_examples=25, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def three_body():
    from hyperbolic_nbody.acceptance import three_body_system

    return three_body_system()


@pytest.fixture
def kepler():
    return MassSystem([1.0, 2.0], 2)
