"""
Rollouts and Evaluation

collect_rollout steps every worker for `horizon` control steps against a
frozen parameter snapshot and returns the batch plus the finished episode
outcomes; the trainer applies those to the curriculum and sampler afterwards.
evaluate runs deterministic episodes and reports ablation-table metrics.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional

import numpy as np
import torch
from pydantic import BaseModel, ConfigDict, Field

from .arm import N_CHANNELS, OBS_DIM, ArmConfig, ArmEnv, Target
from .curriculum import (
    S1,
    S3,
    S4,
    CurriculumConfig,
    CurriculumState,
    RewardMode,
    RewardWeights,
    reward_weights,
    target_extrusion,
)
from .masking import ActionMask, apply_mask
from .ppo import ActorCritic, RolloutBatch, deterministic_action, sample_action
from .reward import compute_reward
from .sampler import CellStats, SamplerConfig, cell_of, sample_target

REWARD_TERMS = ("r_progress", "r_touch", "r_jerk", "r_effort")


class RolloutConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_envs: int = Field(16, ge=1)
    horizon: int = Field(2048, ge=1)
    frameskip: int = Field(3, ge=1)
    episode_limit: float = Field(10.0, gt=0.0)


@dataclass(frozen=True)
class TaskContext:
    """Read-only view of the curriculum and sampler handed to one rollout."""

    arm: ArmConfig
    rollout: RolloutConfig
    sampler: SamplerConfig
    curriculum: CurriculumConfig
    curriculum_state: CurriculumState
    cell_stats: CellStats
    mask: ActionMask
    curriculum_enabled: bool = True
    button_radius: float = 0.0015
    reward_mode: RewardMode = "dynamic"

    @property
    def stage(self) -> int:
        # Without a curriculum the agent trains on the flat full-screen task directly
        return self.curriculum_state.stage if self.curriculum_enabled else S3

    @property
    def position(self) -> tuple[int, int]:
        return self.curriculum_state.position()

    @property
    def weights(self) -> RewardWeights:
        return reward_weights(self.curriculum_state, self.curriculum, self.reward_mode, self.curriculum_enabled)

    @property
    def start_spread(self) -> Optional[tuple[float, float]]:
        if self.curriculum_enabled and self.curriculum.fixed_start_stage1 and self.stage == S1:
            return (0.0, 0.0)
        return None

    def next_target(self, env: ArmEnv) -> Target:
        extrusion = target_extrusion(self.curriculum_state, self.curriculum) if self.curriculum_enabled else 0.0
        current_s = env.surface_position() if self.stage == S4 else None
        return sample_target(
            self.cell_stats,
            self.stage,
            env.rng,
            current_s,
            self.sampler,
            extrusion,
            self.arm.surface_length,
            radius=None if self.curriculum_enabled else self.button_radius,
            uniform_cells=not self.curriculum_enabled,
        )


def _policy_outputs(model: ActorCritic, obs: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Mean, log_std and value for one observation, detached from the graph."""
    with torch.no_grad():
        mean, log_std, value = model(torch.as_tensor(obs, dtype=model.dtype))
        return mean.detach().double().numpy(), log_std.detach().double().numpy(), value.detach().item()


@dataclass
class EpisodeOutcome:
    """One finished target attempt (a whole episode, or one target of a stage-4 sequence)."""

    success: bool
    errors: int
    time: float
    termination: str
    center_s: float
    radius: float
    cell: int
    position: tuple[int, int]
    adaptive: bool
    tip_speed: float = 0.0

    def to_dict(self) -> dict:
        """Row for the training log."""
        return asdict(self)


class RolloutWorker:
    """Episode bookkeeping around one ArmEnv."""

    def __init__(self, env: ArmEnv):
        self.env = env
        self.obs: Optional[np.ndarray] = None
        self.prev_action: Optional[np.ndarray] = None
        self.errors = 0
        self.target_start_time = 0.0
        self.target_position: tuple[int, int] = (0, 0)
        self.tip_speed = 0.0

    def start_episode(self, ctx: TaskContext) -> None:
        self.env.reset(ctx.start_spread)
        self.prev_action = None
        self.tip_speed = 0.0
        self._assign_target(ctx)

    def _assign_target(self, ctx: TaskContext) -> None:
        target = ctx.next_target(self.env)
        self.obs = self.env.retarget(target, ctx.rollout.episode_limit)
        self.errors = 0
        self.target_start_time = self.env.state.sim_time if self.env.state else 0.0
        self.target_position = ctx.position

    def _outcome(self, ctx: TaskContext, success: bool, time: float, termination: str) -> EpisodeOutcome:
        target = self.env.target
        assert target is not None
        return EpisodeOutcome(
            success=success,
            errors=self.errors,
            time=time - self.target_start_time,
            termination=termination,
            center_s=target.center_s,
            radius=target.radius,
            cell=cell_of(target.center_s, ctx.arm.surface_length, ctx.cell_stats.n_cells),
            position=self.target_position,
            adaptive=ctx.stage >= S3,
            tip_speed=self.tip_speed,
        )

    def step(self, model: ActorCritic, ctx: TaskContext, weights: RewardWeights) -> dict:
        """Advance one control step; returns the transition record."""
        assert self.obs is not None
        obs = self.obs
        mean, log_std, value = _policy_outputs(model, obs)

        env_action, raw, log_prob = sample_action(mean, log_std, self.env.rng, ctx.mask)
        command = apply_mask(env_action, ctx.mask)
        limit = ctx.rollout.episode_limit
        outcome = self.env.step(command, ctx.rollout.frameskip, limit)
        breakdown = compute_reward(outcome.diagnostics, self.prev_action, command, outcome.decisive_touch, weights)
        self.prev_action = command
        self.errors += outcome.n_errors

        hit = outcome.success
        success = hit is not None
        finished: list[EpisodeOutcome] = []
        done = terminal = False
        next_value: Optional[float] = None

        if hit is not None:
            finished.append(self._outcome(ctx, True, hit.time, "success"))
        if success and ctx.stage == S4 and outcome.terminated == "running":
            # Continuous sequences: next target from wherever the finger is now
            self.tip_speed = float(np.linalg.norm(self.env.fingertip_velocity()))
            self._assign_target(ctx)
        elif success:
            done = terminal = True
        elif outcome.terminated != "running":
            finished.append(self._outcome(ctx, False, outcome.state.sim_time, outcome.terminated))
            done = True
            terminal = outcome.terminated == "out_of_bounds"
        else:
            self.obs = outcome.observation

        if done:
            if not terminal:
                next_value = _policy_outputs(model, outcome.observation)[2]
            self.start_episode(ctx)

        return {
            "obs": obs,
            "action": raw,
            "log_prob": log_prob,
            "value": value,
            "reward": breakdown.total,
            "terms": breakdown,
            "done": done,
            "terminal": terminal,
            "next_value": next_value,
            "finished": finished,
        }

    def snapshot(self) -> dict:
        """Env snapshot plus the bookkeeping of the attempt in progress."""
        return {
            "env": self.env.snapshot(),
            "obs": None if self.obs is None else self.obs.tolist(),
            "prev_action": None if self.prev_action is None else self.prev_action.tolist(),
            "errors": self.errors,
            "target_start_time": self.target_start_time,
            "target_position": list(self.target_position),
            "tip_speed": self.tip_speed,
        }

    def restore(self, data: dict) -> None:
        """Inverse of snapshot()."""
        self.env.restore(data["env"])
        self.obs = None if data["obs"] is None else np.asarray(data["obs"], dtype=np.float64)
        self.prev_action = None if data["prev_action"] is None else np.asarray(data["prev_action"], dtype=np.float64)
        self.errors = int(data["errors"])
        self.target_start_time = float(data["target_start_time"])
        self.target_position = (int(data["target_position"][0]), int(data["target_position"][1]))
        self.tip_speed = float(data["tip_speed"])


def make_workers(arm: ArmConfig, n_envs: int, seed: int) -> list[RolloutWorker]:
    """One worker per env, each with its own child random stream."""
    children = np.random.SeedSequence(seed).spawn(n_envs)
    return [RolloutWorker(ArmEnv(arm, child)) for child in children]


def collect_rollout(model: ActorCritic, workers: list[RolloutWorker], ctx: TaskContext,
                    threads: int = 1) -> tuple[RolloutBatch, list[EpisodeOutcome]]:
    """
    Step every worker `horizon` times and gather the transitions.

    Raises:
        InitFailure: Propagated from an episode reset.
    """
    horizon = ctx.rollout.horizon
    n_envs = len(workers)
    weights = ctx.weights
    for worker in workers:
        if worker.obs is None:
            worker.start_episode(ctx)

    obs = np.zeros((horizon, n_envs, OBS_DIM))
    actions = np.zeros((horizon, n_envs, N_CHANNELS))
    log_probs = np.zeros((horizon, n_envs))
    rewards = np.zeros((horizon, n_envs))
    values = np.zeros((horizon, n_envs))
    next_values = np.zeros((horizon, n_envs))
    dones = np.zeros((horizon, n_envs))
    terminals = np.zeros((horizon, n_envs))
    term_sums = dict.fromkeys(REWARD_TERMS, 0.0)
    outcomes: list[EpisodeOutcome] = []

    executor = ThreadPoolExecutor(max_workers=threads) if threads > 1 and n_envs > 1 else None
    try:
        for t in range(horizon):
            if executor is not None:
                records = list(executor.map(lambda w: w.step(model, ctx, weights), workers))
            else:
                records = [w.step(model, ctx, weights) for w in workers]
            # Merge in env-index order
            for i, rec in enumerate(records):
                obs[t, i] = rec["obs"]
                actions[t, i] = rec["action"]
                log_probs[t, i] = rec["log_prob"]
                rewards[t, i] = rec["reward"]
                values[t, i] = rec["value"]
                dones[t, i] = rec["done"]
                terminals[t, i] = rec["terminal"]
                if rec["next_value"] is not None:
                    next_values[t, i] = rec["next_value"]
                for name in REWARD_TERMS:
                    term_sums[name] += getattr(rec["terms"], name)
                outcomes.extend(rec["finished"])
    finally:
        if executor is not None:
            executor.shutdown()

    next_values[:-1] = np.where(dones[:-1] > 0, next_values[:-1], values[1:])
    for i, worker in enumerate(workers):
        if not dones[-1, i]:
            next_values[-1, i] = _policy_outputs(model, worker.obs)[2]

    batch = RolloutBatch(
        observations=obs,
        actions=actions,
        log_probs=log_probs,
        rewards=rewards,
        values=values,
        next_values=next_values,
        dones=dones,
        terminals=terminals,
        reward_terms={k: v / (horizon * n_envs) for k, v in term_sums.items()},
    )
    return batch, outcomes


@dataclass
class EvalEpisode:
    success: bool
    errors: int
    time: float
    cell: int = 0


@dataclass
class EvalMetrics:
    """Success rate plus error/time averages over the successful episodes."""

    success_rate: float
    avg_errors_per_success_episode: Optional[float]
    avg_time_per_success_episode: Optional[float]
    n_episodes: int
    cell_success_rate: list[Optional[float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        """Metrics as printed by `dexterlab eval`."""
        return asdict(self)


def metrics_from_episodes(episodes: Iterable[EvalEpisode], n_cells: int = 0) -> EvalMetrics:
    episodes = list(episodes)
    successes = [e for e in episodes if e.success]
    n = len(episodes)
    cell_rates: list[Optional[float]] = []
    for cell in range(n_cells):
        in_cell = [e.success for e in episodes if e.cell == cell]
        cell_rates.append(sum(in_cell) / len(in_cell) if in_cell else None)
    return EvalMetrics(
        success_rate=len(successes) / n if n else 0.0,
        avg_errors_per_success_episode=(sum(e.errors for e in successes) / len(successes)) if successes else None,
        avg_time_per_success_episode=(sum(e.time for e in successes) / len(successes)) if successes else None,
        n_episodes=n,
        cell_success_rate=cell_rates,
    )


def run_eval_episode(model: ActorCritic, env: ArmEnv, target: Target, rollout: RolloutConfig,
                     mask: ActionMask) -> EvalEpisode:
    """Deterministic episode ending at the first success, timeout or boundary exit."""
    limit = rollout.episode_limit
    obs = env.retarget(target, limit)
    errors = 0
    while True:
        mean, _, _ = _policy_outputs(model, obs)
        command = apply_mask(deterministic_action(mean), mask)
        outcome = env.step(command, rollout.frameskip, limit)
        errors += outcome.n_errors
        hit = outcome.success
        if hit is not None:
            return EvalEpisode(True, errors, hit.time)
        if outcome.terminated != "running":
            return EvalEpisode(False, errors, outcome.state.sim_time)
        obs = outcome.observation


def evaluate(model: ActorCritic, arm: ArmConfig, rollout: RolloutConfig, sampler: SamplerConfig,
             mask: ActionMask, n_episodes: int = 100, radius: float = 0.0015, seed: int = 0) -> EvalMetrics:
    """Ablation metrics over n_episodes flat targets of a fixed radius, uniform over cells."""
    env = ArmEnv(arm, seed)
    uniform = CellStats.new(sampler.n_cells, sampler.ema_decay)
    episodes: list[EvalEpisode] = []
    for _ in range(n_episodes):
        env.reset()
        target = sample_target(uniform, S3, env.rng, None, sampler, 0.0, arm.surface_length,
                               radius=radius, uniform_cells=True)
        episode = run_eval_episode(model, env, target, rollout, mask)
        episode.cell = cell_of(target.center_s, arm.surface_length, sampler.n_cells)
        episodes.append(episode)
    return metrics_from_episodes(episodes, sampler.n_cells)
