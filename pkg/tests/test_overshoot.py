"""Tests for the scripted frameskip overshoot reach."""

import pytest

from dexterlab.arm import ArmConfig
from dexterlab.overshoot import DEFAULT_OFFSETS, frameskip_sweep, reach_crossing, scripted_reach


class TestScriptedReach:
    """Test the lateral-brake-press reach."""

    def test_reach_crosses_the_screen(self, arm_config: ArmConfig):
        """Test that the braked reach lands on the screen near the target."""
        center = arm_config.surface_length / 2
        crossing = scripted_reach(arm_config, 0.03, 3)
        assert crossing is not None
        assert abs(crossing - center) < 0.02

    def test_single_phase_at_frameskip_one(self, arm_config: ArmConfig):
        """Test that the phase average at frameskip 1 is the plain reach."""
        assert reach_crossing(arm_config, 0.03, 1) == scripted_reach(arm_config, 0.03, 1)

    def test_later_switch_lands_further(self, arm_config: ArmConfig):
        """Test that every coarse grid phase crosses at or past the frameskip-1 reach."""
        fine = scripted_reach(arm_config, 0.03, 1)
        coarse = [scripted_reach(arm_config, 0.03, 10, phase=p) for p in range(1, 11)]
        assert all(c >= fine for c in coarse)
        assert max(coarse) > fine

    def test_invalid_phase(self, arm_config: ArmConfig):
        """Test that a phase outside 1..frameskip is rejected."""
        with pytest.raises(ValueError):
            scripted_reach(arm_config, 0.03, 3, phase=4)


class TestFrameskipSweep:
    """Test the overshoot comparison across frameskips."""

    def test_coarse_control_overshoots_more_on_every_reach(self, arm_config: ArmConfig):
        """Test that frameskip 10 overshoots more than frameskip 3 at each offset."""
        fine, coarse = frameskip_sweep(arm_config, frameskips=(3, 10))
        assert len(fine.overshoots) == len(DEFAULT_OFFSETS)
        for fine_overshoot, coarse_overshoot in zip(fine.overshoots, coarse.overshoots):
            assert fine_overshoot is not None and coarse_overshoot is not None
            assert 0.0 < fine_overshoot < coarse_overshoot < 0.02

    def test_overshoot_grows_with_frameskip(self, arm_config: ArmConfig):
        """Test that the mean overshoot increases across 1, 3, 5, 10."""
        means = [r.mean_overshoot for r in frameskip_sweep(arm_config, offsets=(0.025, 0.035))]
        assert means == sorted(means)
        assert len(set(means)) == len(means)
