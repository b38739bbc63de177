import numpy as np
import pytest

from ridematch.roadnet import build_city_network, build_grid_network
from ridematch.trips import synth_commute


@pytest.fixture(scope="session")
def grid5():
    return build_grid_network(5, 5, 500.0, speed_jitter_seed=1)


@pytest.fixture(scope="session")
def city21():
    return build_city_network(21, 21, 500.0, seed=42)


@pytest.fixture(scope="session")
def small_workload(city21):
    return synth_commute(city21, 120, seed=3)


@pytest.fixture()
def rng():
    # function-scoped so draws are deterministic regardless of test order
    return np.random.default_rng(0)
