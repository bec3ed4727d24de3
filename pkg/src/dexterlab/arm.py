"""
Planar Muscle Arm

A three-joint planar arm (shoulder, elbow, index finger) driven by eleven
first-order muscle channels, pointing at a one-dimensional touch screen.

Pure physics lives in module-level functions; ArmEnv bundles one arm, its
random stream and its current target for the rollout code.

Channel layout:
    0/1   shoulder flexor / extensor
    2/3   elbow flexor / extensor
    4/5   biarticular flexor / extensor (shoulder + elbow)
    6/7   index finger flexor / extensor
    8-10  the other fingers (zero moment arm on every joint)

Observation layout (OBS_DIM = 25, lengths in centimetres):
    q[3], qdot[3], activations[11], fingertip[2] relative to the screen's
    start point, fingertip velocity[2], target center_s, radius,
    extrusion_depth, remaining-time fraction
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, model_validator

from .errors import InitFailure

N_JOINTS = 3
N_CHANNELS = 11
DISTRACTOR_CHANNELS = (8, 9, 10)
OBS_DIM = 25
LENGTH_SCALE = 100.0  # metres -> centimetres in observations

TouchKind = Literal["none", "success", "error"]
Termination = Literal["running", "timeout", "out_of_bounds"]

# Moment arms (m) per channel for (shoulder, elbow, finger)
DEFAULT_MOMENT_ARMS: list[list[float]] = [
    [0.04, 0.0, 0.0],
    [-0.04, 0.0, 0.0],
    [0.0, 0.03, 0.0],
    [0.0, -0.03, 0.0],
    [0.02, 0.02, 0.0],
    [-0.02, -0.02, 0.0],
    [0.0, 0.0, 0.01],
    [0.0, 0.0, -0.01],
    [0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0],
]

DEFAULT_MAX_FORCE: list[float] = [100.0, 100.0, 100.0, 100.0, 80.0, 80.0, 50.0, 50.0, 30.0, 30.0, 30.0]


class ArmConfig(BaseModel):
    """Plant, screen and workspace parameters of the simulated arm."""

    model_config = ConfigDict(extra="forbid")

    link_lengths: tuple[float, float, float] = (0.30, 0.33, 0.08)
    joint_limits: tuple[tuple[float, float], tuple[float, float], tuple[float, float]] = (
        (-1.6, 1.6),
        (0.0, 2.6),
        (-0.6, 0.6),
    )
    muscle_moment_arms: list[list[float]] = Field(default_factory=lambda: [list(r) for r in DEFAULT_MOMENT_ARMS])
    muscle_max_force: list[float] = Field(default_factory=lambda: list(DEFAULT_MAX_FORCE))
    joint_damping: tuple[float, float, float] = (10.0, 10.0, 2.0)
    activation_tau: float = 0.04
    physics_dt: float = 0.002
    # (x_min, y_min, x_max, y_max)
    workspace_bounds: tuple[float, float, float, float] = (0.55, -0.09, 0.62, 0.09)
    surface_start: tuple[float, float] = (0.60, -0.06)
    surface_end: tuple[float, float] = (0.60, 0.06)
    # Initial fingertip sits this far in front of the screen midpoint
    init_standoff: float = 0.025
    init_spread: tuple[float, float] = (0.08, 0.10)
    init_max_attempts: int = 1000

    _moment_arms: np.ndarray = PrivateAttr()
    _max_force: np.ndarray = PrivateAttr()
    _damping: np.ndarray = PrivateAttr()
    _lower: np.ndarray = PrivateAttr()
    _upper: np.ndarray = PrivateAttr()
    _origin: np.ndarray = PrivateAttr()
    _direction: np.ndarray = PrivateAttr()
    _normal: np.ndarray = PrivateAttr()
    _length: float = PrivateAttr()

    @model_validator(mode="after")
    def _check(self) -> "ArmConfig":
        if any(length <= 0 for length in self.link_lengths):
            raise ValueError("link_lengths must all be positive")
        if self.physics_dt <= 0:
            raise ValueError("physics_dt must be positive")
        if self.activation_tau <= 0:
            raise ValueError("activation_tau must be positive")
        if len(self.muscle_moment_arms) != N_CHANNELS or any(len(r) != N_JOINTS for r in self.muscle_moment_arms):
            raise ValueError(f"muscle_moment_arms must be {N_CHANNELS} rows of {N_JOINTS}")
        if len(self.muscle_max_force) != N_CHANNELS:
            raise ValueError(f"muscle_max_force must have {N_CHANNELS} entries")
        for channel in DISTRACTOR_CHANNELS:
            if any(v != 0.0 for v in self.muscle_moment_arms[channel]):
                raise ValueError(f"distractor channel {channel} must have zero moment arms")
        for lo, hi in self.joint_limits:
            if lo >= hi:
                raise ValueError("joint_limits must be (low, high) with low < high")
        x_min, y_min, x_max, y_max = self.workspace_bounds
        if x_min >= x_max or y_min >= y_max:
            raise ValueError("workspace_bounds must be (x_min, y_min, x_max, y_max)")
        if self.surface_start == self.surface_end:
            raise ValueError("surface must have nonzero length")
        if self.init_max_attempts < 1:
            raise ValueError("init_max_attempts must be >= 1")
        return self

    def model_post_init(self, __context: Any) -> None:
        self._moment_arms = np.asarray(self.muscle_moment_arms, dtype=np.float64)
        self._max_force = np.asarray(self.muscle_max_force, dtype=np.float64)
        self._damping = np.asarray(self.joint_damping, dtype=np.float64)
        limits = np.asarray(self.joint_limits, dtype=np.float64)
        self._lower = limits[:, 0].copy()
        self._upper = limits[:, 1].copy()
        start = np.asarray(self.surface_start, dtype=np.float64)
        span = np.asarray(self.surface_end, dtype=np.float64) - start
        self._length = float(np.hypot(span[0], span[1]))
        self._origin = start
        self._direction = span / self._length
        normal = np.array([-self._direction[1], self._direction[0]])
        # Front side is the one facing the shoulder
        if float(normal @ (-start)) < 0:
            normal = -normal
        self._normal = normal

    @property
    def moment_arms(self) -> np.ndarray:
        return self._moment_arms

    @property
    def max_force(self) -> np.ndarray:
        return self._max_force

    @property
    def damping(self) -> np.ndarray:
        return self._damping

    @property
    def lower_limits(self) -> np.ndarray:
        return self._lower

    @property
    def upper_limits(self) -> np.ndarray:
        return self._upper

    @property
    def surface_length(self) -> float:
        return self._length

    @property
    def surface_origin(self) -> np.ndarray:
        return self._origin

    @property
    def surface_direction(self) -> np.ndarray:
        return self._direction

    @property
    def surface_normal(self) -> np.ndarray:
        """Unit normal pointing to the front of the screen."""
        return self._normal

    def surface_point(self, s: float) -> np.ndarray:
        """Point on the screen at arclength s."""
        return self._origin + s * self._direction

    def to_surface(self, point: np.ndarray) -> tuple[float, float]:
        """(arclength, height in front of the screen) of a point."""
        rel = point - self._origin
        return float(rel @ self._direction), float(rel @ self._normal)


@dataclass
class ArmState:
    """Physical state of the arm; sim_time is always n_steps * physics_dt."""

    q: np.ndarray
    qdot: np.ndarray
    activations: np.ndarray
    prev_fingertip: np.ndarray
    n_steps: int = 0
    sim_time: float = 0.0

    @classmethod
    def at_rest(cls, q: np.ndarray, config: ArmConfig) -> "ArmState":
        """Create a motionless state with all muscles relaxed."""
        q = np.asarray(q, dtype=np.float64).copy()
        return cls(
            q=q,
            qdot=np.zeros(N_JOINTS),
            activations=np.zeros(N_CHANNELS),
            prev_fingertip=forward_kinematics(q, config),
        )

    @classmethod
    def from_dict(cls, data: dict) -> "ArmState":
        """Inverse of to_dict(); arrays come back as float64."""
        return cls(
            q=np.asarray(data["q"], dtype=np.float64),
            qdot=np.asarray(data["qdot"], dtype=np.float64),
            activations=np.asarray(data["activations"], dtype=np.float64),
            prev_fingertip=np.asarray(data["prev_fingertip"], dtype=np.float64),
            n_steps=int(data["n_steps"]),
            sim_time=float(data["sim_time"]),
        )

    def to_dict(self) -> dict:
        """Arrays become lists so the state can go into a JSON checkpoint."""
        return {
            "q": self.q.tolist(),
            "qdot": self.qdot.tolist(),
            "activations": self.activations.tolist(),
            "prev_fingertip": self.prev_fingertip.tolist(),
            "n_steps": self.n_steps,
            "sim_time": self.sim_time,
        }


@dataclass(frozen=True)
class Target:
    """On-screen button: interval center_s ± radius, optionally extruded."""

    center_s: float
    radius: float
    extrusion_depth: float = 0.0

    @classmethod
    def from_dict(cls, data: dict) -> "Target":
        """Build a target from to_dict() output; a missing extrusion_depth means flat."""
        return cls(float(data["center_s"]), float(data["radius"]), float(data.get("extrusion_depth", 0.0)))

    def to_dict(self) -> dict:
        """Plain floats, keyed by field name."""
        return {"center_s": self.center_s, "radius": self.radius, "extrusion_depth": self.extrusion_depth}


@dataclass(frozen=True)
class TouchEvent:
    kind: TouchKind = "none"
    position_s: Optional[float] = None
    time: float = 0.0


NO_TOUCH = TouchEvent()


@dataclass(frozen=True)
class StepDiagnostics:
    """Per-step inputs for the reward terms."""

    distance_before: float
    distance_after: float
    effort: float  # mean over substeps of sum(a_m^2)


@dataclass
class StepOutcome:
    state: ArmState
    observation: np.ndarray
    touch: TouchEvent
    terminated: Termination
    diagnostics: StepDiagnostics
    events: list[TouchEvent] = field(default_factory=list)

    @property
    def success(self) -> Optional[TouchEvent]:
        """First successful touch among the substeps, if any."""
        return next((e for e in self.events if e.kind == "success"), None)

    @property
    def n_errors(self) -> int:
        """Error touches up to the first success (all of them if none)."""
        count = 0
        for event in self.events:
            if event.kind == "success":
                break
            count += event.kind == "error"
        return count

    @property
    def decisive_touch(self) -> TouchEvent:
        """The success if one happened, else the first touch."""
        return self.success or self.touch


def forward_kinematics(q: np.ndarray, config: ArmConfig) -> np.ndarray:
    """Fingertip position of the planar chain rooted at the shoulder."""
    l1, l2, lf = config.link_lengths
    a1 = q[0]
    a2 = a1 + q[1]
    a3 = a2 + q[2]
    return np.array([
        l1 * math.cos(a1) + l2 * math.cos(a2) + lf * math.cos(a3),
        l1 * math.sin(a1) + l2 * math.sin(a2) + lf * math.sin(a3),
    ])


def inverse_kinematics(point: np.ndarray, config: ArmConfig) -> np.ndarray:
    """
    Joint angles placing the fingertip at `point` with the finger straight.

    Returns the elbow-up solution (positive elbow angle).

    Raises:
        ValueError: If the point is out of reach.
    """
    l1, l2, lf = config.link_lengths
    lo = l2 + lf
    x, y = float(point[0]), float(point[1])
    cos_elbow = (x * x + y * y - l1 * l1 - lo * lo) / (2.0 * l1 * lo)
    if not -1.0 <= cos_elbow <= 1.0:
        raise ValueError(f"point ({x:.4f}, {y:.4f}) is out of reach")
    elbow = math.acos(cos_elbow)
    shoulder = math.atan2(y, x) - math.atan2(lo * math.sin(elbow), l1 + lo * math.cos(elbow))
    return np.array([shoulder, elbow, 0.0])


def muscle_step(a: float | np.ndarray, u: float | np.ndarray, dt: float, tau: float):
    """Exact first-order activation update toward the command u."""
    return np.clip(u + (a - u) * math.exp(-dt / tau), 0.0, 1.0)


def joint_torques(activations: np.ndarray, qdot: np.ndarray, config: ArmConfig) -> np.ndarray:
    return config.moment_arms.T @ (config.max_force * activations) - config.damping * qdot


def physics_step(state: ArmState, activations: np.ndarray, config: ArmConfig) -> ArmState:
    """One semi-implicit Euler step of the unit-inertia arm."""
    dt = config.physics_dt
    torque = joint_torques(activations, state.qdot, config)
    qdot = state.qdot + torque * dt
    q = state.q + qdot * dt

    below = q < config.lower_limits
    above = q > config.upper_limits
    if below.any() or above.any():
        q = np.clip(q, config.lower_limits, config.upper_limits)
        qdot = np.where(below | above, 0.0, qdot)

    n_steps = state.n_steps + 1
    return ArmState(
        q=q,
        qdot=qdot,
        activations=np.array(activations, dtype=np.float64),
        prev_fingertip=forward_kinematics(state.q, config),
        n_steps=n_steps,
        sim_time=n_steps * dt,
    )


def _segment_box_entry(p0: tuple[float, float], p1: tuple[float, float],
                       lo: tuple[float, float], hi: tuple[float, float]) -> Optional[float]:
    """Liang-Barsky clip: segment parameter where p0->p1 enters the box, or None."""
    t_enter, t_exit = 0.0, 1.0
    for axis in range(2):
        delta = p1[axis] - p0[axis]
        for p, q in ((-delta, p0[axis] - lo[axis]), (delta, hi[axis] - p0[axis])):
            if p == 0.0:
                if q < 0.0:
                    return None
                continue
            r = q / p
            if p < 0.0:
                t_enter = max(t_enter, r)
            else:
                t_exit = min(t_exit, r)
    if t_enter > t_exit:
        return None
    return t_enter


def detect_touch(prev_tip: np.ndarray, new_tip: np.ndarray, target: Target,
                 config: ArmConfig, time: float = 0.0) -> TouchEvent:
    """
    Classify the fingertip movement prev_tip -> new_tip against the screen.

    Flat targets touch on a front-to-back crossing of the screen segment.
    Extruded targets succeed as soon as the fingertip, coming from the front,
    enters the box standing on the target interval; crossings outside the
    interval are errors.
    """
    s0, h0 = config.to_surface(prev_tip)
    s1, h1 = config.to_surface(new_tip)

    if target.extrusion_depth > 0.0 and h0 > 0.0:
        lo = (target.center_s - target.radius, 0.0)
        hi = (target.center_s + target.radius, target.extrusion_depth)
        entry = _segment_box_entry((s0, h0), (s1, h1), lo, hi)
        if entry is not None and entry > 0.0:
            return TouchEvent("success", s0 + entry * (s1 - s0), time)

    if h0 > 0.0 and h1 <= 0.0:
        frac = h0 / (h0 - h1)
        s_cross = s0 + frac * (s1 - s0)
        if 0.0 <= s_cross <= config.surface_length:
            if abs(s_cross - target.center_s) <= target.radius:
                # Only reachable for flat targets; extruded ones already entered the box
                return TouchEvent("success", s_cross, time)
            return TouchEvent("error", s_cross, time)
    return NO_TOUCH


def target_distance(tip: np.ndarray, target: Target, config: ArmConfig) -> float:
    """Euclidean distance from the fingertip to the target's centre on the screen."""
    delta = tip - config.surface_point(target.center_s)
    return float(math.hypot(delta[0], delta[1]))


def check_termination(state: ArmState, episode_limit: float, config: ArmConfig) -> Termination:
    tip = forward_kinematics(state.q, config)
    x_min, y_min, x_max, y_max = config.workspace_bounds
    if not (x_min <= tip[0] <= x_max and y_min <= tip[1] <= y_max):
        return "out_of_bounds"
    if state.sim_time + 1e-9 >= episode_limit:
        return "timeout"
    return "running"


def build_observation(state: ArmState, target: Target, config: ArmConfig, episode_limit: float) -> np.ndarray:
    tip = forward_kinematics(state.q, config)
    velocity = (tip - state.prev_fingertip) / config.physics_dt
    remaining = max(0.0, 1.0 - state.sim_time / episode_limit)
    return np.concatenate([
        state.q,
        state.qdot,
        state.activations,
        (tip - config.surface_origin) * LENGTH_SCALE,
        velocity * LENGTH_SCALE,
        [
            target.center_s * LENGTH_SCALE,
            target.radius * LENGTH_SCALE,
            target.extrusion_depth * LENGTH_SCALE,
            remaining,
        ],
    ])


def env_step(state: ArmState, action: np.ndarray, frameskip: int, target: Target,
             config: ArmConfig, episode_limit: float = 10.0) -> StepOutcome:
    """Hold `action` for `frameskip` physics substeps and report what happened."""
    if frameskip < 1:
        raise ValueError("frameskip must be >= 1")
    command = np.clip(np.asarray(action, dtype=np.float64), 0.0, 1.0)
    distance_before = target_distance(forward_kinematics(state.q, config), target, config)

    events: list[TouchEvent] = []
    effort = 0.0
    for _ in range(frameskip):
        activations = muscle_step(state.activations, command, config.physics_dt, config.activation_tau)
        state = physics_step(state, activations, config)
        tip = forward_kinematics(state.q, config)
        event = detect_touch(state.prev_fingertip, tip, target, config, time=state.sim_time)
        if event.kind != "none":
            events.append(event)
        effort += float(activations @ activations)

    tip = forward_kinematics(state.q, config)
    return StepOutcome(
        state=state,
        observation=build_observation(state, target, config, episode_limit),
        touch=events[0] if events else NO_TOUCH,
        terminated=check_termination(state, episode_limit, config),
        diagnostics=StepDiagnostics(
            distance_before=distance_before,
            distance_after=target_distance(tip, target, config),
            effort=effort / frameskip,
        ),
        events=events,
    )


def init_center(config: ArmConfig) -> np.ndarray:
    """Joint angles of the task-relevant start pose, index finger pointing forward."""
    midpoint = config.surface_point(config.surface_length / 2.0)
    return inverse_kinematics(midpoint + config.init_standoff * config.surface_normal, config)


def init_state(rng: np.random.Generator, config: ArmConfig,
               spread: Optional[tuple[float, float]] = None) -> ArmState:
    """
    Sample a start pose around init_center with the finger straight.

    Raises:
        InitFailure: If no sample lands in front of the screen inside the
            workspace within config.init_max_attempts draws.
    """
    spread = config.init_spread if spread is None else spread
    center = init_center(config)
    lows = np.maximum(center[:2] - np.asarray(spread), config.lower_limits[:2])
    highs = np.minimum(center[:2] + np.asarray(spread), config.upper_limits[:2])
    x_min, y_min, x_max, y_max = config.workspace_bounds

    for _ in range(config.init_max_attempts):
        q = np.array([rng.uniform(lows[0], highs[0]), rng.uniform(lows[1], highs[1]), 0.0])
        tip = forward_kinematics(q, config)
        _, height = config.to_surface(tip)
        if x_min <= tip[0] <= x_max and y_min <= tip[1] <= y_max and height > 0.0:
            return ArmState.at_rest(q, config)
    raise InitFailure(
        f"no valid start pose in {config.init_max_attempts} attempts; "
        "check workspace_bounds, init_standoff and init_spread"
    )


class ArmEnv:
    """
    One simulated arm with its own random stream and current target.

    Instances share nothing, so many can be stepped from different threads.
    """

    def __init__(self, config: ArmConfig, seed):
        self.config = config
        self.rng = np.random.default_rng(seed)
        self.state: Optional[ArmState] = None
        self.target: Optional[Target] = None

    @property
    def fingertip(self) -> np.ndarray:
        assert self.state is not None
        return forward_kinematics(self.state.q, self.config)

    def fingertip_velocity(self) -> np.ndarray:
        assert self.state is not None
        return (self.fingertip - self.state.prev_fingertip) / self.config.physics_dt

    def reset(self, spread: Optional[tuple[float, float]] = None) -> ArmState:
        """Start a new episode at a freshly sampled pose; assign a target next."""
        self.state = init_state(self.rng, self.config, spread)
        self.target = None
        return self.state

    def surface_position(self) -> float:
        """Fingertip projection onto the screen line (arclength)."""
        return self.config.to_surface(self.fingertip)[0]

    def retarget(self, target: Target, episode_limit: float) -> np.ndarray:
        """Set the target (mid-episode swaps leave the arm state untouched)."""
        self.target = target
        return self.observe(episode_limit)

    def observe(self, episode_limit: float) -> np.ndarray:
        assert self.state is not None and self.target is not None
        return build_observation(self.state, self.target, self.config, episode_limit)

    def step(self, action: np.ndarray, frameskip: int, episode_limit: float) -> StepOutcome:
        assert self.state is not None and self.target is not None, "reset() first"
        outcome = env_step(self.state, action, frameskip, self.target, self.config, episode_limit)
        self.state = outcome.state
        return outcome

    def snapshot(self) -> dict:
        """JSON-safe copy of the arm state, target and generator state."""
        return {
            "rng": self.rng.bit_generator.state,
            "state": self.state.to_dict() if self.state else None,
            "target": self.target.to_dict() if self.target else None,
        }

    def restore(self, data: dict) -> None:
        """Put the env back exactly where snapshot() left it, random stream included."""
        self.rng.bit_generator.state = data["rng"]
        self.state = ArmState.from_dict(data["state"]) if data["state"] else None
        self.target = Target.from_dict(data["target"]) if data["target"] else None
