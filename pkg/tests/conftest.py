import numpy as np
import pytest

from rotorspin.feedforward import fm_from_track
from rotorspin.protocols import SimConfig


@pytest.fixture(scope="session")
def sim_config() -> SimConfig:
    """Default simulation context with the track built once per session."""
    cfg = SimConfig()
    cfg.track()
    return cfg


@pytest.fixture(scope="session")
def track(sim_config):
    return sim_config.track()


@pytest.fixture(scope="session")
def profile(sim_config, track):
    return fm_from_track(track, sim_config.rotation)


@pytest.fixture(scope="session")
def b_rf(sim_config) -> float:
    return sim_config.b_rf_gauss()


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(1234)
