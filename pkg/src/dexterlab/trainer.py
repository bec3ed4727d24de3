"""
Training Loop

Trainer owns the model, the optimizer, the curriculum and sampler state and
the rollout workers. One update = collect a rollout against the frozen
parameters, run PPO on it, then fold the finished episodes into the
curriculum and the per-cell statistics.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np
import torch

from .arm import N_CHANNELS, OBS_DIM
from .checkpoint import Checkpoint, capture_tensors, load_checkpoint, restore_tensors, save_checkpoint
from .config import ExperimentConfig
from .curriculum import CurriculumState, record_episode, try_advance
from .errors import NumericalInstabilityError
from .ppo import ActorCritic, compute_gae, make_optimizer, ppo_update
from .rollout import EpisodeOutcome, TaskContext, collect_rollout, make_workers
from .runlog import JsonlLog, RunLock
from .sampler import CellStats, update_cell

logger = logging.getLogger(__name__)

TRAIN_LOG = "train_log.jsonl"
NAN_DUMP = "nan_dump.json"
LATEST_CHECKPOINT = "checkpoint_latest.ckpt"


def build_model(config: ExperimentConfig) -> ActorCritic:
    torch.manual_seed(config.seed)
    return ActorCritic(OBS_DIM, N_CHANNELS, config.ppo.hidden, config.ppo.init_log_std)


class Trainer:
    """Collect -> update loop for one ExperimentConfig."""

    def __init__(self, config: ExperimentConfig, threads: int = 1, run_dir: Optional[Union[str, Path]] = None,
                 quiet: bool = False):
        self.config = config
        self.threads = threads
        self.run_dir = Path(run_dir if run_dir is not None else config.output_dir)
        self.quiet = quiet

        self.model = build_model(config)
        self.optimizer = make_optimizer(self.model, config.ppo)
        self.rng = np.random.default_rng([config.seed, 1])
        self.workers = make_workers(config.arm, config.rollout.n_envs, config.seed)
        self.curriculum = CurriculumState.new(config.curriculum)
        self.cell_stats = CellStats.new(config.sampler.n_cells, config.sampler.ema_decay)
        self.timestep = 0
        self.n_updates = 0
        self.log = JsonlLog(self.run_dir / TRAIN_LOG)

    # ---- state ----

    def context(self) -> TaskContext:
        """Frozen copies of curriculum and sampler state for the next rollout."""
        cfg = self.config
        return TaskContext(
            arm=cfg.arm,
            rollout=cfg.rollout,
            sampler=cfg.sampler,
            curriculum=cfg.curriculum,
            curriculum_state=CurriculumState.from_dict(self.curriculum.to_dict(), cfg.curriculum),
            cell_stats=self.cell_stats.copy(),
            mask=cfg.mask,
            curriculum_enabled=cfg.curriculum_enabled,
            button_radius=cfg.button_radius,
            reward_mode=cfg.reward_mode,
        )

    def checkpoint(self) -> Checkpoint:
        tensors, steps = capture_tensors(self.model, self.optimizer)
        return Checkpoint(
            config=self.config.to_dict(),
            timestep=self.timestep,
            n_updates=self.n_updates,
            curriculum=self.curriculum.to_dict(),
            sampler=self.cell_stats.to_dict(),
            rng=self.rng.bit_generator.state,
            workers=[w.snapshot() for w in self.workers],
            tensors=tensors,
            optimizer_steps=steps,
        )

    def save(self, path: Optional[Union[str, Path]] = None) -> Path:
        ckpt = self.checkpoint()
        if path is None:
            save_checkpoint(ckpt, self.run_dir / "checkpoints" / f"update_{self.n_updates:06d}.ckpt")
            path = self.run_dir / LATEST_CHECKPOINT
        return save_checkpoint(ckpt, path)

    @classmethod
    def from_checkpoint(cls, path: Union[str, Path], threads: int = 1,
                        run_dir: Optional[Union[str, Path]] = None, quiet: bool = False) -> "Trainer":
        """
        Rebuild a trainer exactly as it was when the checkpoint was written.

        Raises:
            CheckpointError: If the file is corrupt or does not fit the model.
            ConfigError: If the embedded config no longer validates.
        """
        ckpt = load_checkpoint(path)
        config = ExperimentConfig.from_dict(ckpt.config)
        trainer = cls(config, threads=threads, run_dir=run_dir, quiet=quiet)
        restore_tensors(trainer.model, trainer.optimizer, ckpt)
        trainer.timestep = ckpt.timestep
        trainer.n_updates = ckpt.n_updates
        trainer.curriculum = CurriculumState.from_dict(ckpt.curriculum, config.curriculum)
        trainer.cell_stats = CellStats.from_dict(ckpt.sampler)
        trainer.rng.bit_generator.state = ckpt.rng
        for worker, snapshot in zip(trainer.workers, ckpt.workers):
            worker.restore(snapshot)
        return trainer

    # ---- training ----

    def apply_outcomes(self, outcomes: list[EpisodeOutcome]) -> list[dict[str, Any]]:
        """Fold finished episodes into the curriculum and cell statistics; returns advance events."""
        advances = []
        for outcome in outcomes:
            if outcome.adaptive or not self.config.curriculum_enabled:
                update_cell(self.cell_stats, outcome.cell, outcome.success)
            # Episodes started before an advance belong to the easier task
            if outcome.position != self.curriculum.position():
                continue
            record_episode(self.curriculum, outcome.success)
            if not self.config.curriculum_enabled:
                continue
            before = self.curriculum.position()
            rate = self.curriculum.success_rate
            _, advanced = try_advance(self.curriculum, self.config.curriculum)
            if advanced:
                advances.append({
                    "event": "curriculum_advance",
                    "timestep": self.timestep,
                    "from_stage": before[0],
                    "from_sub_stage": before[1],
                    "stage": self.curriculum.stage,
                    "sub_stage": self.curriculum.sub_stage,
                    "success_rate": rate,
                })
        return advances

    def update_once(self) -> dict[str, Any]:
        """One rollout plus one PPO update; returns the log record."""
        cfg = self.config
        ctx = self.context()
        batch, outcomes = collect_rollout(self.model, self.workers, ctx, self.threads)
        compute_gae(batch, cfg.ppo.gamma, cfg.ppo.gae_lambda)
        stats = ppo_update(self.model, self.optimizer, batch, cfg.ppo, self.timestep, cfg.total_timesteps,
                           cfg.mask, self.rng)
        self.timestep += len(batch)
        self.n_updates += 1
        advances = self.apply_outcomes(outcomes)

        speeds = [o.tip_speed for o in outcomes if o.tip_speed > 0.0]
        record = {
            "event": "update",
            "timestep": self.timestep,
            "update": self.n_updates,
            "stage": ctx.curriculum_state.stage,
            "sub_stage": ctx.curriculum_state.sub_stage,
            "windowed_success": self.curriculum.success_rate,
            "episodes": len(outcomes),
            "rollout_success": (sum(o.success for o in outcomes) / len(outcomes)) if outcomes else None,
            "reward_terms": batch.reward_terms,
            "cell_success": self.cell_stats.ema_success.tolist(),
            "mean_switch_speed": float(np.mean(speeds)) if speeds else None,
            **stats,
        }
        self.log.write(record)
        for event in advances:
            self.log.write(event)
            if not self.quiet:
                print(f"🎓 Advanced to {self.curriculum.describe(cfg.curriculum)} "
                      f"at t={self.timestep:,} (window success {event['success_rate']:.2f})")
        return record

    def _dump_nan(self, error: NumericalInstabilityError) -> Path:
        path = self.run_dir / NAN_DUMP
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps({"message": str(error), "timestep": self.timestep,
                                    "update": self.n_updates, "diagnostics": error.diagnostics},
                                   sort_keys=True, indent=2, default=str))
        return path

    def run(self, max_updates: Optional[int] = None) -> Path:
        """
        Train until total_timesteps (or max_updates more updates) and checkpoint.

        Returns:
            Path of the final checkpoint.

        Raises:
            NumericalInstabilityError: After writing nan_dump.json; the log so far is kept.
            RunLockedError: If another process owns the run directory.
        """
        cfg = self.config
        done_updates = 0
        with RunLock(self.run_dir):
            while self.timestep < cfg.total_timesteps:
                if max_updates is not None and done_updates >= max_updates:
                    break
                try:
                    record = self.update_once()
                except NumericalInstabilityError as e:
                    dump = self._dump_nan(e)
                    logger.error("numerical instability at t=%d, diagnostics in %s", self.timestep, dump)
                    raise
                done_updates += 1
                logger.debug("update %d: t=%d policy_loss=%.4f", self.n_updates, self.timestep, record["policy_loss"])
                if self.n_updates % cfg.checkpoint_every == 0:
                    path = self.save()
                    if not self.quiet:
                        print(f"💾 Checkpoint at update {self.n_updates} (t={self.timestep:,}): {path}")
            return self.save()


def load_policy(path: Union[str, Path]) -> tuple[ExperimentConfig, ActorCritic]:
    """Config and trained model from a checkpoint, without any rollout state."""
    ckpt = load_checkpoint(path)
    config = ExperimentConfig.from_dict(ckpt.config)
    model = build_model(config)
    restore_tensors(model, make_optimizer(model, config.ppo), ckpt)
    return config, model
