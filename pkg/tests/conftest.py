import pytest
from hypothesis import HealthCheck, settings

from beamspace import build_grid

settings.register_profile(
    "ci", derandomize=True, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")


@pytest.fixture(scope="session")
def default_grid():
    return build_grid(91, 180)


@pytest.fixture(scope="session")
def small_grid():
    return build_grid(5, 8)
