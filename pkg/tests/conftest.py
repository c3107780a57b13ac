import numpy as np
import pytest

from viewcone import (
    ExpertGains,
    ExpertPolicy,
    ScenarioConfig,
    SensorParams,
    generate_dataset,
    sample_scenario,
)


def rng(*key) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))


@pytest.fixture(scope="session")
def small_dataset():
    """Shared 12-trajectory unicycle demonstration set."""
    cfg = ScenarioConfig()
    sensor = SensorParams(55.0, 0.392, 0.8)
    return generate_dataset(cfg, sensor, ExpertPolicy(), 12, seed=77)


@pytest.fixture(scope="session")
def small_scenario():
    return sample_scenario(ScenarioConfig(), rng(3))


@pytest.fixture(scope="session")
def smooth_expert_gains():
    """Demonstrator settings used by the behavior-cloning recipes."""
    return ExpertGains(k_rep=1.2e4, v_max=20.0, memory_horizon=12)
