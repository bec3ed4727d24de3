"""
Curriculum State Machine

Four stages, each split into sub-stages. The agent moves on only after a
full window of episodes reaches the success threshold; stage 1 flattens the
target, stage 2 ramps in the jerk and effort penalties.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

RewardMode = Literal["dynamic", "early", "basic"]

STAGES = (
    "s1_task_complexity",
    "s2_dynamic_reward",
    "s3_adaptive_sampling",
    "s4_continuous_sequences",
)

STAGE_DESCRIPTIONS = {
    "s1_task_complexity": "Stage 1: Increasing Task Complexity",
    "s2_dynamic_reward": "Stage 2: Dynamic Reward Shaping",
    "s3_adaptive_sampling": "Stage 3: Adaptive Target Sampling",
    "s4_continuous_sequences": "Stage 4: Continuous Movement Sequences",
}

S1, S2, S3, S4 = range(4)


class RewardWeights(BaseModel):
    """Weights of the progress, touch, jerk and effort reward terms."""

    model_config = ConfigDict(extra="forbid")

    w_d: float = Field(1.0, ge=0.0)
    B: float = Field(10.0, ge=0.0)
    P: float = Field(1.0, ge=0.0)
    w_j: float = Field(0.1, ge=0.0)
    w_e: float = Field(0.05, ge=0.0)

    def without_smoothness(self) -> "RewardWeights":
        """Same weights with the jerk and effort penalties switched off."""
        return self.model_copy(update={"w_j": 0.0, "w_e": 0.0})


class CurriculumConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    sub_stages_per_stage: tuple[int, int, int, int] = (4, 4, 4, 1)
    advance_threshold: float = Field(0.70, gt=0.0, le=1.0)
    window: int = Field(500, ge=1)
    extrusion_start: float = Field(0.020, gt=0.0)
    final_weights: RewardWeights = Field(default_factory=RewardWeights)
    # Stage 1 starts every episode from the same pose
    fixed_start_stage1: bool = True

    @model_validator(mode="after")
    def _check(self) -> "CurriculumConfig":
        if any(k < 1 for k in self.sub_stages_per_stage):
            raise ValueError("every stage needs at least one sub-stage")
        return self


@dataclass
class CurriculumState:
    """Where a training run is in the curriculum."""

    stage: int
    sub_stage: int
    success_window: deque[bool]
    episodes_in_substage: int = 0
    total_episodes: int = 0

    @classmethod
    def new(cls, config: CurriculumConfig) -> "CurriculumState":
        """Start at the first sub-stage of stage 1 with an empty window."""
        return cls(stage=S1, sub_stage=0, success_window=deque(maxlen=config.window))

    @classmethod
    def from_dict(cls, data: dict, config: CurriculumConfig) -> "CurriculumState":
        """
        Rebuild a saved state.

        The window length comes from config, not from the saved data, so a
        resumed run with a smaller window keeps only the newest outcomes.
        """
        return cls(
            stage=int(data["stage"]),
            sub_stage=int(data["sub_stage"]),
            success_window=deque((bool(x) for x in data["success_window"]), maxlen=config.window),
            episodes_in_substage=int(data["episodes_in_substage"]),
            total_episodes=int(data["total_episodes"]),
        )

    def to_dict(self) -> dict:
        """Position, counters and the window contents, oldest outcome first."""
        return {
            "stage": self.stage,
            "sub_stage": self.sub_stage,
            "success_window": list(self.success_window),
            "episodes_in_substage": self.episodes_in_substage,
            "total_episodes": self.total_episodes,
        }

    @property
    def stage_name(self) -> str:
        return STAGES[self.stage]

    @property
    def success_rate(self) -> float:
        """Success rate over the window (0.0 while empty)."""
        if not self.success_window:
            return 0.0
        return sum(self.success_window) / len(self.success_window)

    def position(self) -> tuple[int, int]:
        return self.stage, self.sub_stage

    def describe(self, config: CurriculumConfig) -> str:
        total = config.sub_stages_per_stage[self.stage]
        return f"{STAGE_DESCRIPTIONS[self.stage_name]} (sub-stage {self.sub_stage + 1}/{total})"


def _ramp(sub_stage: int, n_sub_stages: int) -> float:
    if n_sub_stages <= 1:
        return 1.0
    return sub_stage / (n_sub_stages - 1)


def target_extrusion(state: CurriculumState, config: CurriculumConfig) -> float:
    """Height of the stage-1 button above the screen; zero from the last S1 sub-stage on."""
    if state.stage != S1:
        return 0.0
    return config.extrusion_start * (1.0 - _ramp(state.sub_stage, config.sub_stages_per_stage[S1]))


def reward_weights(state: CurriculumState, config: CurriculumConfig, mode: RewardMode = "dynamic",
                   curriculum_enabled: bool = True) -> RewardWeights:
    """
    Reward weights in effect at the current curriculum position.

    dynamic: basic weights before stage 2, jerk/effort ramped in over the
             stage-2 sub-stages, full weights afterwards
    early:   full weights from the first step
    basic:   jerk/effort never switched on
    """
    final = config.final_weights
    if mode == "early":
        return final
    if mode == "basic" or not curriculum_enabled or state.stage == S1:
        return final.without_smoothness()
    if state.stage == S2:
        frac = _ramp(state.sub_stage, config.sub_stages_per_stage[S2])
        return final.model_copy(update={"w_j": final.w_j * frac, "w_e": final.w_e * frac})
    return final


def record_episode(state: CurriculumState, success: bool) -> CurriculumState:
    """Push one episode outcome into the window (oldest evicted when full)."""
    state.success_window.append(bool(success))
    state.episodes_in_substage += 1
    state.total_episodes += 1
    return state


def is_final_position(state: CurriculumState, config: CurriculumConfig) -> bool:
    return state.stage == S4 and state.sub_stage == config.sub_stages_per_stage[S4] - 1


def try_advance(state: CurriculumState, config: CurriculumConfig) -> tuple[CurriculumState, bool]:
    """Move one sub-stage (or stage) forward when a full window meets the threshold."""
    if len(state.success_window) < config.window:
        return state, False
    if state.success_rate < config.advance_threshold:
        return state, False
    if is_final_position(state, config):
        return state, False

    if state.sub_stage < config.sub_stages_per_stage[state.stage] - 1:
        state.sub_stage += 1
    else:
        state.stage += 1
        state.sub_stage = 0
    state.success_window.clear()
    state.episodes_in_substage = 0
    return state, True
