"""Tests for the planar muscle arm."""

import math

import numpy as np
import pytest

from dexterlab.arm import (
    N_CHANNELS,
    OBS_DIM,
    ArmConfig,
    ArmEnv,
    ArmState,
    Target,
    build_observation,
    check_termination,
    detect_touch,
    env_step,
    forward_kinematics,
    init_center,
    init_state,
    inverse_kinematics,
    muscle_step,
    physics_step,
)
from dexterlab.errors import InitFailure


class TestMuscleAndKinematics:
    """Test the analytic pieces of the plant."""

    def test_muscle_step_matches_closed_form(self):
        """Test the activation update against u + (a - u) exp(-dt/tau)."""
        for a, u in [(0.0, 1.0), (1.0, 0.0), (0.3, 0.7), (0.9, 0.9)]:
            expected = u + (a - u) * math.exp(-0.002 / 0.04)
            assert abs(muscle_step(a, u, 0.002, 0.04) - expected) <= 1e-12

    def test_muscle_step_stays_in_unit_interval(self):
        """Test that activations never leave [0, 1]."""
        a = np.array([0.0, 1.0, 0.5])
        for _ in range(1000):
            a = muscle_step(a, np.array([1.0, 0.0, 1.0]), 0.002, 0.04)
            assert np.all((a >= 0.0) & (a <= 1.0))

    def test_forward_kinematics_hand_poses(self, arm_config: ArmConfig):
        """Test fingertip positions of poses worked out by hand."""
        cases = [
            ((0.0, 0.0, 0.0), (0.71, 0.0)),
            ((math.pi / 2, 0.0, 0.0), (0.0, 0.71)),
            ((0.0, math.pi / 2, 0.0), (0.30, 0.41)),
            ((0.0, 0.0, math.pi / 2), (0.63, 0.08)),
        ]
        for q, tip in cases:
            np.testing.assert_allclose(forward_kinematics(np.array(q), arm_config), tip, atol=1e-12)

    def test_inverse_kinematics_round_trip(self, arm_config: ArmConfig):
        """Test that FK(IK(p)) returns p with the finger straight."""
        for point in [(0.575, 0.0), (0.58, -0.05), (0.56, 0.07)]:
            q = inverse_kinematics(np.array(point), arm_config)
            assert q[2] == 0.0
            assert q[1] > 0.0, "Should pick the elbow-up solution"
            np.testing.assert_allclose(forward_kinematics(q, arm_config), point, atol=1e-12)

    def test_inverse_kinematics_out_of_reach(self, arm_config: ArmConfig):
        """Test that unreachable points raise."""
        with pytest.raises(ValueError):
            inverse_kinematics(np.array([1.0, 0.0]), arm_config)


class TestPhysics:
    """Test the integrator."""

    def test_matches_quarter_step_reference(self, arm_config: ArmConfig):
        """Test max joint-angle error against a dt/4 run over one second."""
        fine = ArmConfig.model_validate({**arm_config.model_dump(), "physics_dt": arm_config.physics_dt / 4})
        rng = np.random.default_rng(0)
        coarse_state = ArmState.at_rest(init_center(arm_config), arm_config)
        fine_state = ArmState.at_rest(init_center(arm_config), fine)

        max_error = 0.0
        for _ in range(20):
            command = rng.uniform(0.2, 0.8, N_CHANNELS)
            for _ in range(25):
                a = muscle_step(coarse_state.activations, command, arm_config.physics_dt, arm_config.activation_tau)
                coarse_state = physics_step(coarse_state, a, arm_config)
                for _ in range(4):
                    a = muscle_step(fine_state.activations, command, fine.physics_dt, fine.activation_tau)
                    fine_state = physics_step(fine_state, a, fine)
                max_error = max(max_error, float(np.max(np.abs(coarse_state.q - fine_state.q))))

        assert coarse_state.sim_time == pytest.approx(1.0)
        assert max_error <= 1e-3

    def test_joint_limit_clamps_and_stops(self, arm_config: ArmConfig):
        """Test that a joint pushed past its limit is clamped with zero velocity."""
        q = np.array([0.0, arm_config.upper_limits[1] - 1e-4, 0.0])
        state = ArmState.at_rest(q, arm_config)
        state.qdot = np.array([0.0, 5.0, 0.0])
        nxt = physics_step(state, np.zeros(N_CHANNELS), arm_config)
        assert nxt.q[1] == arm_config.upper_limits[1]
        assert nxt.qdot[1] == 0.0

    def test_sim_time_counts_substeps(self, arm_env: ArmEnv):
        """Test that one control step advances frameskip physics steps."""
        outcome = arm_env.step(np.zeros(N_CHANNELS), 3, 10.0)
        assert outcome.state.n_steps == 3
        assert outcome.state.sim_time == 3 * arm_env.config.physics_dt

    def test_control_period_scales_with_frameskip(self, arm_config: ArmConfig, mid_target: Target):
        """Test 6 ms and 20 ms control periods, and that one long step equals many short ones."""
        state = ArmState.at_rest(init_center(arm_config), arm_config)
        action = np.full(N_CHANNELS, 0.6)
        assert env_step(state, action, 3, mid_target, arm_config).state.sim_time == pytest.approx(0.006)
        coarse = env_step(state, action, 10, mid_target, arm_config).state
        assert coarse.sim_time == pytest.approx(0.020)
        fine = state
        for _ in range(10):
            fine = env_step(fine, action, 1, mid_target, arm_config).state
        assert np.array_equal(coarse.q, fine.q)
        assert np.array_equal(coarse.qdot, fine.qdot)

    def test_distractor_channels_do_not_move_the_arm(self, arm_config: ArmConfig, mid_target: Target):
        """Test that the unused fingers have no effect on joint motion."""
        state = ArmState.at_rest(init_center(arm_config), arm_config)
        base = np.full(N_CHANNELS, 0.3)
        noisy = base.copy()
        noisy[[8, 9, 10]] = 1.0
        a = env_step(state, base, 10, mid_target, arm_config)
        b = env_step(state, noisy, 10, mid_target, arm_config)
        assert np.array_equal(a.state.q, b.state.q)
        assert np.array_equal(a.state.qdot, b.state.qdot)


class TestTouch:
    """Test touch classification against the screen at x = 0.60."""

    def test_flat_crossing_inside_is_success(self, arm_config: ArmConfig):
        """Test a press landing on the button."""
        event = detect_touch(np.array([0.59, 0.0]), np.array([0.605, 0.0]), Target(0.06, 0.005), arm_config)
        assert event.kind == "success"
        assert event.position_s == pytest.approx(0.06)

    def test_flat_crossing_outside_is_error(self, arm_config: ArmConfig):
        """Test a press landing off the button."""
        event = detect_touch(np.array([0.59, 0.0]), np.array([0.605, 0.0]), Target(0.03, 0.005), arm_config)
        assert event.kind == "error"

    def test_back_to_front_is_not_a_touch(self, arm_config: ArmConfig):
        """Test that leaving the screen does not count."""
        event = detect_touch(np.array([0.605, 0.0]), np.array([0.59, 0.0]), Target(0.06, 0.005), arm_config)
        assert event.kind == "none"

    def test_crossing_beyond_screen_end_is_ignored(self, arm_config: ArmConfig):
        """Test that crossing the screen line past its end is not a touch."""
        event = detect_touch(np.array([0.59, 0.10]), np.array([0.605, 0.10]), Target(0.06, 0.005), arm_config)
        assert event.kind == "none"

    def test_extruded_box_entry_is_success(self, arm_config: ArmConfig):
        """Test that entering the raised button counts before reaching the screen."""
        target = Target(0.06, 0.006, extrusion_depth=0.02)
        event = detect_touch(np.array([0.57, 0.0]), np.array([0.585, 0.0]), target, arm_config)
        assert event.kind == "success"
        assert event.position_s == pytest.approx(0.06)

    def test_extruded_lateral_miss_is_none(self, arm_config: ArmConfig):
        """Test that passing beside the raised button without crossing is nothing."""
        target = Target(0.06, 0.006, extrusion_depth=0.02)
        event = detect_touch(np.array([0.57, 0.03]), np.array([0.585, 0.03]), target, arm_config)
        assert event.kind == "none"

    def test_extruded_entry_from_behind_is_not_a_touch(self, arm_config: ArmConfig):
        """Test that pulling back out through the raised button is nothing, as for a flat one."""
        extruded = Target(0.06, 0.006, extrusion_depth=0.02)
        behind, front = np.array([0.605, 0.0]), np.array([0.595, 0.0])
        assert detect_touch(behind, front, extruded, arm_config).kind == "none"
        assert detect_touch(behind, front, Target(0.06, 0.006), arm_config).kind == "none"


class TestEpisodeBoundaries:
    """Test termination, observation and initialization."""

    def test_out_of_bounds_before_timeout(self, arm_config: ArmConfig):
        """Test that leaving the workspace wins over the time limit."""
        state = ArmState.at_rest(np.zeros(3), arm_config)
        assert check_termination(state, 10.0, arm_config) == "out_of_bounds"
        state.sim_time = 10.0
        assert check_termination(state, 10.0, arm_config) == "out_of_bounds"

    def test_timeout(self, arm_config: ArmConfig):
        """Test the episode time limit."""
        state = ArmState.at_rest(init_center(arm_config), arm_config)
        assert check_termination(state, 10.0, arm_config) == "running"
        state.n_steps = 5000
        state.sim_time = 5000 * arm_config.physics_dt
        assert check_termination(state, 10.0, arm_config) == "timeout"

    def test_observation_layout(self, arm_config: ArmConfig, mid_target: Target):
        """Test observation length and the target fields in centimetres."""
        state = ArmState.at_rest(init_center(arm_config), arm_config)
        obs = build_observation(state, mid_target, arm_config, 10.0)
        assert obs.shape == (OBS_DIM,)
        assert obs[21] == pytest.approx(mid_target.center_s * 100)
        assert obs[22] == pytest.approx(mid_target.radius * 100)
        assert obs[24] == 1.0

    def test_init_state_valid(self, arm_config: ArmConfig, rng: np.random.Generator):
        """Test that sampled start poses are at rest, in bounds and in front of the screen."""
        x_min, y_min, x_max, y_max = arm_config.workspace_bounds
        for _ in range(200):
            state = init_state(rng, arm_config)
            tip = forward_kinematics(state.q, arm_config)
            assert x_min <= tip[0] <= x_max and y_min <= tip[1] <= y_max
            assert arm_config.to_surface(tip)[1] > 0.0
            assert not state.qdot.any() and not state.activations.any()
            assert state.q[2] == 0.0

    def test_init_state_covers_reachable_cells(self, arm_config: ArmConfig, rng: np.random.Generator):
        """Test that 10,000 start poses visit at least 90% of the reachable 1 cm cells."""
        x_min, y_min, x_max, y_max = arm_config.workspace_bounds
        center = init_center(arm_config)
        lows = np.maximum(center[:2] - np.asarray(arm_config.init_spread), arm_config.lower_limits[:2])
        highs = np.minimum(center[:2] + np.asarray(arm_config.init_spread), arm_config.upper_limits[:2])

        def cell(tip: np.ndarray) -> tuple[int, int]:
            return int((tip[0] - x_min) // 0.01), int((tip[1] - y_min) // 0.01)

        reachable = set()
        for q0 in np.linspace(lows[0], highs[0], 200):
            for q1 in np.linspace(lows[1], highs[1], 200):
                tip = forward_kinematics(np.array([q0, q1, 0.0]), arm_config)
                if x_min <= tip[0] <= x_max and y_min <= tip[1] <= y_max and arm_config.to_surface(tip)[1] > 0.0:
                    reachable.add(cell(tip))
        visited = {cell(forward_kinematics(init_state(rng, arm_config).q, arm_config)) for _ in range(10_000)}
        assert len(reachable) > 10
        assert len(visited & reachable) >= 0.9 * len(reachable)

    def test_zero_spread_is_fixed_start(self, arm_config: ArmConfig, rng: np.random.Generator):
        """Test that a zero spread always returns the centre pose."""
        state = init_state(rng, arm_config, spread=(0.0, 0.0))
        np.testing.assert_array_equal(state.q, init_center(arm_config))

    def test_init_failure(self, rng: np.random.Generator):
        """Test that an unsatisfiable workspace raises InitFailure."""
        config = ArmConfig(workspace_bounds=(0.61, -0.09, 0.62, 0.09), init_max_attempts=50)
        with pytest.raises(InitFailure):
            init_state(rng, config)


class TestArmEnv:
    """Test the env wrapper."""

    def test_snapshot_restore_replays_identically(self, arm_env: ArmEnv):
        """Test that a restored env continues bit for bit."""
        action = np.full(N_CHANNELS, 0.4)
        snapshot = arm_env.snapshot()
        first = [arm_env.step(action, 3, 10.0).observation for _ in range(5)]
        arm_env.restore(snapshot)
        second = [arm_env.step(action, 3, 10.0).observation for _ in range(5)]
        for a, b in zip(first, second):
            assert np.array_equal(a, b)

    def test_touch_is_first_substep_event(self, arm_config: ArmConfig):
        """Test that the reported touch is the first of the substep events."""
        env = ArmEnv(arm_config, 0)
        env.state = ArmState.at_rest(inverse_kinematics(np.array([0.599, 0.0]), arm_config), arm_config)
        env.state.qdot = np.array([0.0, -2.0, 0.0])
        env.retarget(Target(arm_config.surface_length / 2.0, 0.005), 10.0)
        outcome = env.step(np.zeros(N_CHANNELS), 10, 10.0)
        assert outcome.events, "Fingertip should cross the screen"
        assert outcome.touch == outcome.events[0]

    def test_every_screen_crossing_is_an_event(self, arm_config: ArmConfig):
        """Test substep events against a crossing scan of the re-simulated fingertip path."""
        length = arm_config.surface_length
        for seed in range(5):
            rng = np.random.default_rng(seed)
            env = ArmEnv(arm_config, seed)
            env.state = ArmState.at_rest(inverse_kinematics(np.array([0.599, 0.0]), arm_config), arm_config)
            env.state.qdot = np.array([0.0, -2.0, 0.0])
            env.retarget(Target(length / 2.0, 0.005), 10.0)
            replay = ArmState.from_dict(env.state.to_dict())
            path = [forward_kinematics(replay.q, arm_config)]

            n_events = 0
            for _ in range(60):
                action = np.zeros(N_CHANNELS)
                action[:4] = rng.uniform(0.0, 1.0, 4)
                n_events += len(env.step(action, 5, 10.0).events)
                for _ in range(5):
                    a = muscle_step(replay.activations, action, arm_config.physics_dt, arm_config.activation_tau)
                    replay = physics_step(replay, a, arm_config)
                    path.append(forward_kinematics(replay.q, arm_config))

            crossings = 0
            for p0, p1 in zip(path, path[1:]):
                s0, h0 = arm_config.to_surface(p0)
                s1, h1 = arm_config.to_surface(p1)
                if h0 > 0.0 and h1 <= 0.0:
                    s = s0 + h0 / (h0 - h1) * (s1 - s0)
                    crossings += 0.0 <= s <= length
            assert crossings >= 1
            assert n_events == crossings, f"seed {seed}"
