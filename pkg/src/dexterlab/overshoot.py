"""
Frameskip Overshoot

A scripted reach that slides the fingertip sideways along the front of the
screen until it is level with the target, brakes the slide with the shoulder
extensor, then presses straight in. The switch is decided once per control
step, so coarser control (more physics substeps per action) lets the finger
run further past the target before it turns. The sweep reports how far from
the target centre the first screen crossing lands.

Where the control grid happens to fall relative to the moment the finger is
level is arbitrary, so every reach is repeated once per grid phase (first
control step shortened to 1..frameskip substeps) and the crossings averaged.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .arm import N_CHANNELS, ArmConfig, ArmEnv, ArmState, Target, inverse_kinematics

# Shoulder flexor drives the lateral slide; elbow extensor plus this much
# shoulder flexor pushes the fingertip straight at the screen
LATERAL_COMMAND = {0: 1.0}
BRAKE_COMMAND = {1: 1.0, 3: 1.0}
PRESS_COMMAND = {0: 0.4635, 3: 1.0}

# Multiple of every default frameskip, so all of them brake for the same time
BRAKE_SUBSTEPS = 30

DEFAULT_FRAMESKIPS = (1, 3, 5, 10)
DEFAULT_OFFSETS = (0.02, 0.025, 0.03, 0.035, 0.04)


def _command(channels: dict[int, float]) -> np.ndarray:
    action = np.zeros(N_CHANNELS)
    for index, value in channels.items():
        action[index] = value
    return action


@dataclass
class SweepResult:
    """Crossings and signed overshoots of one frameskip across the start offsets."""

    frameskip: int
    offsets: list[float]
    crossings: list[Optional[float]]
    center_s: float
    overshoots: list[Optional[float]] = field(default_factory=list)

    @property
    def mean_overshoot(self) -> Optional[float]:
        values = [o for o in self.overshoots if o is not None]
        return float(np.mean(values)) if values else None

    def to_dict(self) -> dict:
        """Result fields plus the mean overshoot, for the CLI and JSON logs."""
        return {**asdict(self), "mean_overshoot": self.mean_overshoot}


def scripted_reach(config: ArmConfig, offset: float, frameskip: int, center_s: Optional[float] = None,
                   time_limit: float = 2.0, phase: Optional[int] = None) -> Optional[float]:
    """
    Run one lateral-brake-press reach starting `offset` metres below the target.

    `phase` is the number of substeps in the first control step (1..frameskip,
    default frameskip); it shifts the control grid against the trajectory.

    Returns:
        Arclength of the first screen crossing, or None if the finger never
        reached the screen within time_limit.
    """
    phase = frameskip if phase is None else phase
    if not 1 <= phase <= frameskip:
        raise ValueError(f"phase must be in 1..{frameskip}, got {phase}")
    center = config.surface_length / 2.0 if center_s is None else center_s
    start = config.surface_point(center - offset) + config.init_standoff * config.surface_normal
    env = ArmEnv(config, 0)
    env.state = ArmState.at_rest(inverse_kinematics(start, config), config)
    # Tiny button: any crossing is reported with its position
    env.retarget(Target(center_s=center, radius=1e-6), time_limit)

    lateral = _command(LATERAL_COMMAND)
    brake = _command(BRAKE_COMMAND)
    press = _command(PRESS_COMMAND)
    switched_at: Optional[int] = None
    substeps = phase
    while True:
        if switched_at is None:
            action = lateral
        elif env.state.n_steps - switched_at < BRAKE_SUBSTEPS:
            action = brake
        else:
            action = press
        outcome = env.step(action, substeps, time_limit)
        substeps = frameskip
        if outcome.events:
            return outcome.events[0].position_s
        if outcome.terminated != "running":
            return None
        if switched_at is None and env.surface_position() >= center:
            switched_at = env.state.n_steps


def reach_crossing(config: ArmConfig, offset: float, frameskip: int,
                   center_s: Optional[float] = None) -> Optional[float]:
    """Mean crossing of the reach over every control-grid phase; None if any phase misses."""
    crossings = [scripted_reach(config, offset, frameskip, center_s, phase=phase)
                 for phase in range(1, frameskip + 1)]
    if any(c is None for c in crossings):
        return None
    return float(np.mean(crossings))


def frameskip_sweep(config: ArmConfig, frameskips: Sequence[int] = DEFAULT_FRAMESKIPS,
                    offsets: Sequence[float] = DEFAULT_OFFSETS,
                    center_s: Optional[float] = None) -> list[SweepResult]:
    """Overshoot past the target centre of the phase-averaged reach, per frameskip and offset."""
    center = config.surface_length / 2.0 if center_s is None else center_s
    results = []
    for frameskip in frameskips:
        crossings = [reach_crossing(config, offset, frameskip, center) for offset in offsets]
        results.append(SweepResult(
            frameskip=frameskip,
            offsets=list(offsets),
            crossings=crossings,
            center_s=center,
            overshoots=[None if s is None else s - center for s in crossings],
        ))
    return results
