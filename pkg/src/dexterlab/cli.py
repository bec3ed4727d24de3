"""
dexterlab command line

Usage:
    dexterlab train --config run.yaml [--resume runs/x/checkpoint_latest.ckpt]
    dexterlab eval --checkpoint runs/x/checkpoint_latest.ckpt --episodes 100 --radius-mm 1.5 --seed 0
    dexterlab ablate --config base.yaml --grid grid.yaml
    dexterlab frameskip-overshoot [--config run.yaml] [--frameskips 1 3 5 10]
    dexterlab config [--out defaults.yaml]

Set DEXTERLAB_THREADS (environment or .env) to step rollout envs on several threads.
"""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

import yaml

from . import __version__
from .config import ExperimentConfig, dump_config, load_config, rollout_threads, save_config
from .errors import (
    CheckpointError,
    ConfigError,
    DexterlabError,
    InitFailure,
    NumericalInstabilityError,
    RunLockedError,
)
from .overshoot import DEFAULT_FRAMESKIPS, frameskip_sweep
from .rollout import EvalMetrics, evaluate
from .runlog import append_result
from .trainer import Trainer, load_policy

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INIT = 3
EXIT_NAN = 4
EXIT_CHECKPOINT = 5
EXIT_LOCKED = 6
EXIT_FAILED = 1

RESULTS_FILE = "results.csv"


def _banner(title: str) -> None:
    print("")
    print("=" * 70)
    print(title)
    print("=" * 70)


def _exit_code(error: DexterlabError) -> int:
    if isinstance(error, ConfigError):
        return EXIT_CONFIG
    if isinstance(error, InitFailure):
        return EXIT_INIT
    if isinstance(error, NumericalInstabilityError):
        return EXIT_NAN
    if isinstance(error, CheckpointError):
        return EXIT_CHECKPOINT
    if isinstance(error, RunLockedError):
        return EXIT_LOCKED
    return EXIT_FAILED


def result_row(config: ExperimentConfig, metrics: Optional[EvalMetrics], status: str,
               run_dir: str, radius_mm: Optional[float] = None) -> dict[str, Any]:
    """One results.csv row; metric columns stay empty for failed runs."""
    return {
        "network_size": f"{config.ppo.hidden}x{config.ppo.hidden}",
        "max_timesteps": config.total_timesteps,
        "action_masking": config.mask_enabled,
        "curriculum": config.curriculum_enabled,
        # Without a curriculum dynamic shaping trains as basic
        "dynamic_reward": config.reward_mode == "dynamic" and config.curriculum_enabled,
        "early_reward": config.reward_mode == "early",
        "button_radius_mm": radius_mm if radius_mm is not None else config.button_radius_mm,
        "success_rate": metrics.success_rate if metrics else None,
        "avg_errors": metrics.avg_errors_per_success_episode if metrics else None,
        "avg_time": metrics.avg_time_per_success_episode if metrics else None,
        "n_episodes": metrics.n_episodes if metrics else None,
        "status": status,
        "seed": config.seed,
        "run_dir": run_dir,
    }


def evaluate_config(config: ExperimentConfig, model, episodes: int, radius_mm: float, seed: int) -> EvalMetrics:
    return evaluate(model, config.arm, config.rollout, config.sampler, config.mask,
                    n_episodes=episodes, radius=radius_mm / 1000.0, seed=seed)


# ---- commands ----

def cmd_train(args: argparse.Namespace) -> int:
    threads = rollout_threads()
    if args.resume:
        trainer = Trainer.from_checkpoint(args.resume, threads=threads)
        print(f"🔁 Resuming from {args.resume} at t={trainer.timestep:,}")
    else:
        trainer = Trainer(load_config(args.config), threads=threads)
    config = trainer.config

    _banner("🦾 DEXTERLAB TRAINING")
    print(f"   Run dir:      {trainer.run_dir}")
    print(f"   Timesteps:    {config.total_timesteps:,} ({config.steps_per_update:,} per update)")
    print(f"   Network:      {config.ppo.hidden}x{config.ppo.hidden}")
    print(f"   Masking:      {'on' if config.mask_enabled else 'off'}")
    print(f"   Curriculum:   {'on' if config.curriculum_enabled else 'off'} ({config.reward_mode} reward)")
    print(f"   Threads:      {threads}")

    path = trainer.run()
    print(f"\n✅ Training finished at t={trainer.timestep:,} after {trainer.n_updates} updates")
    print(f"   Final checkpoint: {path}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    config, model = load_policy(args.checkpoint)
    radius_mm = args.radius_mm if args.radius_mm is not None else config.button_radius_mm
    metrics = evaluate_config(config, model, args.episodes, radius_mm, args.seed)
    print(json.dumps(metrics.to_dict(), sort_keys=True))

    results = Path(args.results) if args.results else Path(args.checkpoint).parent / RESULTS_FILE
    append_result(results, result_row(config, metrics, "ok", str(Path(args.checkpoint).parent), radius_mm))
    return EXIT_OK


def _set_dotted(data: dict[str, Any], key: str, value: Any) -> None:
    node = data
    parts = key.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = value


def expand_grid(base: ExperimentConfig, grid: dict[str, list[Any]]) -> list[ExperimentConfig]:
    """
    Every combination of the grid's axis values applied to the base config.

    Keys are dotted config paths (e.g. "ppo.hidden"). Run i gets seed base.seed + i
    and output_dir <base output_dir>/run_<i>.

    Raises:
        ConfigError: If an axis is not a list or a combination does not validate.
    """
    for key, values in grid.items():
        if not isinstance(values, list):
            raise ConfigError(f"grid axis '{key}' must be a list of values", key=key)
    keys = list(grid)
    configs = []
    for index, combo in enumerate(itertools.product(*(grid[k] for k in keys))):
        data = base.to_dict()
        for key, value in zip(keys, combo):
            _set_dotted(data, key, value)
        data["seed"] = base.seed + index
        data["output_dir"] = str(Path(base.output_dir) / f"run_{index:03d}")
        try:
            configs.append(ExperimentConfig.from_dict(data))
        except ConfigError as e:
            cell = ", ".join(f"{k}={v!r}" for k, v in zip(keys, combo))
            raise ConfigError(f"grid run {index} ({cell}): {e}", key=e.key) from e
    return configs


def cmd_ablate(args: argparse.Namespace) -> int:
    base = load_config(args.config)
    grid: dict[str, list[Any]] = {}
    if args.grid:
        try:
            grid = yaml.safe_load(Path(args.grid).read_text()) or {}
        except (OSError, yaml.YAMLError) as e:
            raise ConfigError(f"cannot read grid {args.grid}: {e}") from e
        if not isinstance(grid, dict):
            raise ConfigError("grid must map config keys to lists of values")
    configs = expand_grid(base, grid)
    results = Path(args.results) if args.results else Path(base.output_dir) / RESULTS_FILE
    threads = rollout_threads()

    _banner(f"🧪 DEXTERLAB ABLATION ({len(configs)} runs)")
    failures = 0
    for index, config in enumerate(configs):
        print(f"\n▶️  Run {index + 1}/{len(configs)}: {config.output_dir}")
        try:
            trainer = Trainer(config, threads=threads, quiet=True)
            trainer.run()
            metrics = evaluate_config(config, trainer.model, args.episodes, config.button_radius_mm, config.seed)
            row = result_row(config, metrics, "ok", config.output_dir)
            print(f"   ✅ success rate {metrics.success_rate:.2f}")
        except DexterlabError as e:
            failures += 1
            row = result_row(config, None, f"failed: {type(e).__name__}: {e}", config.output_dir)
            print(f"   ❌ {type(e).__name__}: {e}")
        except Exception as e:
            failures += 1
            logger.exception("ablation run %s crashed", config.output_dir)
            row = result_row(config, None, f"failed: {type(e).__name__}: {e}", config.output_dir)
            print(f"   💥 {type(e).__name__}: {e}")
        append_result(results, row)

    print(f"\n📊 Results: {results} ({len(configs) - failures} ok, {failures} failed)")
    return EXIT_OK


def cmd_overshoot(args: argparse.Namespace) -> int:
    config = load_config(args.config) if args.config else ExperimentConfig()
    _banner("🎯 FRAMESKIP OVERSHOOT")
    for result in frameskip_sweep(config.arm, frameskips=args.frameskips):
        mean = result.mean_overshoot
        shown = f"{mean * 1000:.2f} mm" if mean is not None else "no crossing"
        print(f"   frameskip {result.frameskip:>3}: mean overshoot {shown}")
    return EXIT_OK


def cmd_config(args: argparse.Namespace) -> int:
    config = ExperimentConfig()
    if args.out:
        save_config(config, args.out)
        print(f"✅ Default config written to {args.out}")
    else:
        print(dump_config(config), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dexterlab", description="Curriculum PPO for a simulated pointing arm")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="Run the collect/update loop")
    source = train.add_mutually_exclusive_group(required=True)
    source.add_argument("--config", help="YAML experiment config")
    source.add_argument("--resume", help="Checkpoint to resume from")
    train.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="Evaluate a checkpoint")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--episodes", type=int, default=100)
    ev.add_argument("--radius-mm", type=float, default=None, help="Button radius (default: config's)")
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--results", help="CSV to append to (default: next to the checkpoint)")
    ev.set_defaults(func=cmd_eval)

    ablate = sub.add_parser("ablate", help="Train and evaluate every grid combination")
    ablate.add_argument("--config", required=True, help="Base YAML config")
    ablate.add_argument("--grid", help="YAML mapping of config keys to value lists")
    ablate.add_argument("--episodes", type=int, default=100)
    ablate.add_argument("--results", help="CSV path (default: <output_dir>/results.csv)")
    ablate.set_defaults(func=cmd_ablate)

    overshoot = sub.add_parser("frameskip-overshoot", help="Scripted reach overshoot per frameskip")
    overshoot.add_argument("--config", help="YAML config for the arm (default: built-in)")
    overshoot.add_argument("--frameskips", type=int, nargs="+", default=list(DEFAULT_FRAMESKIPS))
    overshoot.set_defaults(func=cmd_overshoot)

    cfg = sub.add_parser("config", help="Print or write the fully defaulted config")
    cfg.add_argument("--out", help="Write to this file instead of stdout")
    cfg.set_defaults(func=cmd_config)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except DexterlabError as e:
        print(f"❌ {type(e).__name__}: {e}", file=sys.stderr)
        return _exit_code(e)
    except KeyboardInterrupt:
        print("\n👋 Interrupted; logs and checkpoints written so far are kept", file=sys.stderr)
        return 130


if __name__ == "__main__":
    sys.exit(main())
