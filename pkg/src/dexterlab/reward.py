"""Per-step reward from arm diagnostics and the curriculum's weights."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .arm import StepDiagnostics, TouchEvent
from .curriculum import RewardWeights


@dataclass(frozen=True)
class RewardBreakdown:
    r_progress: float
    r_touch: float
    r_jerk: float
    r_effort: float

    @property
    def total(self) -> float:
        return self.r_progress + self.r_touch + self.r_jerk + self.r_effort

    def to_dict(self) -> dict:
        """Terms plus their total."""
        return {**asdict(self), "total": self.total}


def compute_reward(diag: StepDiagnostics, prev_action: Optional[np.ndarray], action: np.ndarray,
                   touch: TouchEvent, weights: RewardWeights) -> RewardBreakdown:
    """
    Progress toward the target, touch bonus/penalty, action-change and effort costs.

    prev_action is None on the first control step of an episode.
    """
    r_progress = weights.w_d * (diag.distance_before - diag.distance_after)

    if touch.kind == "success":
        r_touch = weights.B
    elif touch.kind == "error":
        r_touch = -weights.P
    else:
        r_touch = 0.0

    if prev_action is None:
        jerk = 0.0
    else:
        delta = np.asarray(action, dtype=np.float64) - prev_action
        jerk = float(delta @ delta)

    return RewardBreakdown(
        r_progress=r_progress,
        r_touch=r_touch,
        r_jerk=-weights.w_j * jerk,
        r_effort=-weights.w_e * diag.effort,
    )
