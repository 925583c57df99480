import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pcpomdp.simulation import builtin_scenarios

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def maps():
    return builtin_scenarios()


@pytest.fixture(scope="session")
def map1(maps):
    return maps[0]


@pytest.fixture(scope="session")
def map2(maps):
    return maps[1]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
