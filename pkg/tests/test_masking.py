"""Tests for action masking and linear schedules."""

import numpy as np
import pytest

from dexterlab.arm import N_CHANNELS
from dexterlab.masking import ActionMask, ScheduleSpec, apply_mask, schedule_value


class TestActionMask:
    """Test channel masking."""

    def test_default_mask_disables_other_fingers(self):
        """Test that only the distractor fingers are masked by default."""
        mask = ActionMask.task_default()
        assert mask.n_enabled == 8
        assert list(mask.enabled_indices) == list(range(8))

    def test_masked_channels_become_neutral(self):
        """Test that apply_mask overwrites only the disabled channels."""
        action = np.linspace(0.1, 1.0, N_CHANNELS)
        masked = apply_mask(action, ActionMask.task_default())
        np.testing.assert_array_equal(masked[:8], action[:8])
        np.testing.assert_array_equal(masked[8:], 0.0)

    def test_masked_outputs_do_not_matter(self):
        """Test that perturbing masked channels gives bitwise identical commands."""
        mask = ActionMask.task_default()
        rng = np.random.default_rng(5)
        action = rng.uniform(size=N_CHANNELS)
        perturbed = action.copy()
        perturbed[8:] = rng.uniform(size=3)
        assert apply_mask(action, mask).tobytes() == apply_mask(perturbed, mask).tobytes()

    def test_all_enabled_passes_through(self):
        """Test the unmasked configuration."""
        action = np.linspace(0.0, 1.0, N_CHANNELS)
        np.testing.assert_array_equal(apply_mask(action, ActionMask.all_enabled()), action)


class TestSchedules:
    """Test linear decay of learning rate and clip range."""

    def test_learning_rate_schedule(self):
        """Test lr at the start, middle and end of training."""
        spec = ScheduleSpec(6e-4, 1_000_000)
        assert abs(schedule_value(spec, 0) - 6e-4) <= 1e-12
        assert abs(schedule_value(spec, 500_000) - 3e-4) <= 1e-12
        assert schedule_value(spec, 1_000_000) == 0.0

    def test_clip_schedule(self):
        """Test clip range at the start and middle of training."""
        spec = ScheduleSpec(0.2, 1_000_000)
        assert abs(schedule_value(spec, 0) - 0.2) <= 1e-12
        assert abs(schedule_value(spec, 500_000) - 0.1) <= 1e-12

    def test_past_the_end_is_zero(self):
        """Test that the ratio never goes negative."""
        assert schedule_value(ScheduleSpec(6e-4, 100), 250) == 0.0

    def test_invalid_inputs(self):
        """Test that bad horizons and timesteps are rejected."""
        with pytest.raises(ValueError):
            ScheduleSpec(6e-4, 0)
        with pytest.raises(ValueError):
            schedule_value(ScheduleSpec(6e-4, 100), -1)
