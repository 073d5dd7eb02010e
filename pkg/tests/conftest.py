import math

import pytest
from hypothesis import HealthCheck, settings

from spde_powvar.kernels import ModelParams, SamplingScheme

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def params():
    return ModelParams(0.1, 0.1)


@pytest.fixture
def bounded_scheme():
    return SamplingScheme(0.0, math.pi, 64, (0.2,))
