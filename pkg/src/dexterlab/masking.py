"""Action masking between policy and arm, and linear hyperparameter decay."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .arm import DISTRACTOR_CHANNELS, N_CHANNELS


@dataclass(frozen=True)
class ActionMask:
    """Channels the policy may drive; disabled ones are forced to neutral_value."""

    enabled: tuple[bool, ...] = field(
        default_factory=lambda: tuple(i not in DISTRACTOR_CHANNELS for i in range(N_CHANNELS))
    )
    neutral_value: float = 0.0

    @classmethod
    def task_default(cls) -> "ActionMask":
        """Arm and index finger enabled, the other fingers disabled."""
        return cls()

    @classmethod
    def all_enabled(cls, n_channels: int = N_CHANNELS) -> "ActionMask":
        return cls(enabled=(True,) * n_channels)

    @property
    def enabled_indices(self) -> np.ndarray:
        return np.flatnonzero(np.asarray(self.enabled, dtype=bool))

    @property
    def n_enabled(self) -> int:
        return int(sum(self.enabled))


def apply_mask(action: np.ndarray, mask: ActionMask) -> np.ndarray:
    """Replace disabled channels by the neutral value, pass the rest through."""
    return np.where(np.asarray(mask.enabled, dtype=bool), action, mask.neutral_value)


@dataclass(frozen=True)
class ScheduleSpec:
    """p(t) = p0 * r(t) with r decaying linearly from 1 at t=0 to 0 at t=T."""

    p0: float
    total_timesteps: int

    def __post_init__(self) -> None:
        if self.total_timesteps <= 0:
            raise ValueError("total_timesteps must be positive")
        if not np.isfinite(self.p0):
            raise ValueError("p0 must be finite")

    def ratio(self, t: int) -> float:
        return max(0.0, 1.0 - t / self.total_timesteps)


def schedule_value(spec: ScheduleSpec, t: int) -> float:
    if t < 0:
        raise ValueError("timestep must be nonnegative")
    return spec.p0 * spec.ratio(t)
