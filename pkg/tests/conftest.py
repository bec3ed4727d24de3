"""Shared fixtures for the dexterlab tests."""

import numpy as np
import pytest

from dexterlab.arm import ArmConfig, ArmEnv, Target
from dexterlab.config import ExperimentConfig


@pytest.fixture(scope="session")
def arm_config() -> ArmConfig:
    """Provide the default arm."""
    return ArmConfig()


@pytest.fixture
def rng() -> np.random.Generator:
    """Provide a fixed-seed generator."""
    return np.random.default_rng(1234)


@pytest.fixture
def mid_target(arm_config: ArmConfig) -> Target:
    """Provide a flat button at the middle of the screen."""
    return Target(center_s=arm_config.surface_length / 2.0, radius=0.005)


@pytest.fixture
def arm_env(arm_config: ArmConfig, mid_target: Target) -> ArmEnv:
    """Provide an env reset to the start pose with the middle button."""
    env = ArmEnv(arm_config, 7)
    env.reset()
    env.retarget(mid_target, 10.0)
    return env


def tiny_config(tmp_path, **overrides) -> ExperimentConfig:
    """A config small enough to train in a few seconds."""
    data = {
        "seed": 3,
        "ppo": {"hidden": 128, "epochs_per_update": 2, "minibatch_size": 64},
        "rollout": {"n_envs": 2, "horizon": 64},
        "total_timesteps": 2 * 64 * 10,
        "output_dir": str(tmp_path / "run"),
    }
    data.update(overrides)
    return ExperimentConfig.from_dict(data)


@pytest.fixture
def small_config(tmp_path) -> ExperimentConfig:
    """Provide a tiny training config writing into a temp dir."""
    return tiny_config(tmp_path)
