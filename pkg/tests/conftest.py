import math

import pytest
from hypothesis import HealthCheck, settings

import dlss

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")

TWO_PI = 2.0 * math.pi


@pytest.fixture(scope="session")
def grid64():
    return dlss.make_grid(TWO_PI, 64)


@pytest.fixture(scope="session")
def grid128():
    return dlss.make_grid(TWO_PI, 128)


@pytest.fixture(scope="session")
def grid256():
    return dlss.make_grid(TWO_PI, 256)
