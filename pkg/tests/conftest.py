import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from d2dpolicy.channel import LinkRatios, RadioParams, Topology, dbm_to_watts

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=200, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

N0_90 = dbm_to_watts(-90.0)


@pytest.fixture
def radio():
    return RadioParams(N0=N0_90, rho=N0_90, P_U=N0_90 * 150.0 ** 4, P_S=N0_90 * 10 * 60.0 ** 4)


@pytest.fixture
def topo():
    return Topology(pos_U=(150.0, 0.0), pos_S=(0.0, 90.0), pos_D=(60.0, 90.0))


@pytest.fixture
def links(topo, radio):
    return LinkRatios.from_topology(topo, radio)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
