"""
Experiment Configuration

One ExperimentConfig per run, read from and written to YAML. Every nested
model rejects unknown keys, so a typo in an ablation file fails loudly
instead of silently running the default.

Environment (.env is loaded on import):
    DEXTERLAB_THREADS   max rollout worker threads (default 1)
"""

from __future__ import annotations

import logging
import os
from pathlib import Path
from typing import Any, Optional, Union

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .arm import ArmConfig
from .curriculum import CurriculumConfig, RewardMode
from .errors import ConfigError
from .masking import ActionMask
from .ppo import PPOConfig
from .rollout import RolloutConfig
from .sampler import SamplerConfig

logger = logging.getLogger(__name__)

# Load environment variables from .env file
load_dotenv()

THREADS_ENV = "DEXTERLAB_THREADS"


class ExperimentConfig(BaseModel):
    """Everything needed to reproduce one training run (one results row)."""

    model_config = ConfigDict(extra="forbid")

    seed: int = 0
    arm: ArmConfig = Field(default_factory=ArmConfig)
    ppo: PPOConfig = Field(default_factory=PPOConfig)
    rollout: RolloutConfig = Field(default_factory=RolloutConfig)
    curriculum: CurriculumConfig = Field(default_factory=CurriculumConfig)
    sampler: SamplerConfig = Field(default_factory=SamplerConfig)
    mask_enabled: bool = True
    curriculum_enabled: bool = True
    reward_mode: RewardMode = "dynamic"
    # Evaluation radius, and the training radius when the curriculum is off
    button_radius_mm: float = Field(1.5, gt=0.0)
    total_timesteps: int = Field(5_000_000, ge=0)
    output_dir: str = "runs/default"
    checkpoint_every: int = Field(50, ge=1)

    @property
    def button_radius(self) -> float:
        return self.button_radius_mm / 1000.0

    @property
    def mask(self) -> ActionMask:
        return ActionMask.task_default() if self.mask_enabled else ActionMask.all_enabled()

    @property
    def steps_per_update(self) -> int:
        return self.rollout.n_envs * self.rollout.horizon

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ExperimentConfig":
        """
        Validate a plain dict.

        Raises:
            ConfigError: Naming the first offending key (dotted path).
        """
        try:
            return cls.model_validate(data)
        except ValidationError as e:
            first = e.errors()[0]
            key = ".".join(str(part) for part in first["loc"])
            raise ConfigError(f"invalid config key '{key}': {first['msg']}", key=key) from e

    def to_dict(self) -> dict[str, Any]:
        """Dump to JSON-compatible types (tuples become lists)."""
        return self.model_dump(mode="json")


def parse_config(text: str) -> ExperimentConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"config is not valid YAML: {e}") from e
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping at the top level")
    return ExperimentConfig.from_dict(data)


def dump_config(config: ExperimentConfig) -> str:
    return yaml.safe_dump(config.to_dict(), sort_keys=True)


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """
    Read an ExperimentConfig from a YAML file.

    Raises:
        ConfigError: If the file is missing, unparsable, or has bad keys/values.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text())


def save_config(config: ExperimentConfig, path: Union[str, Path]) -> None:
    Path(path).write_text(dump_config(config))


def rollout_threads(value: Optional[str] = None) -> int:
    """Worker thread cap from DEXTERLAB_THREADS; bad values fall back to 1."""
    raw = value if value is not None else os.getenv(THREADS_ENV)
    if raw is None or raw == "":
        return 1
    try:
        threads = int(raw)
    except ValueError:
        logger.warning("%s=%r is not an integer, using 1 thread", THREADS_ENV, raw)
        return 1
    if threads < 1:
        logger.warning("%s=%d must be >= 1, using 1 thread", THREADS_ENV, threads)
        return 1
    return threads
