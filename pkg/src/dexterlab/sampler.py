"""
Target Sampling

Stages 1-2 use one fixed button. Stage 3 draws a screen cell with weight
(1 - success EMA) + epsilon, so weak locations come up more often, and a
radius uniformly from [radius_min, radius_max]. Stage 4 draws the same way
but keeps the next button at least s4_min_offset away from the fingertip.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .arm import Target
from .curriculum import S2, S4


class SamplerConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_cells: int = Field(16, ge=1)
    ema_decay: float = Field(0.99, gt=0.0, lt=1.0)
    radius_min: float = Field(0.0015, gt=0.0)
    radius_max: float = 0.007
    epsilon: float = Field(0.1, gt=0.0)
    # Stage 1-2 button; center defaults to the screen midpoint
    fixed_center_s: Optional[float] = None
    fixed_radius: float = Field(0.006, gt=0.0)
    s4_min_offset: float = Field(0.01, ge=0.0)
    s4_max_redraws: int = Field(100, ge=0)

    @model_validator(mode="after")
    def _check(self) -> "SamplerConfig":
        if self.radius_max < self.radius_min:
            raise ValueError("radius_max must be >= radius_min")
        return self


@dataclass
class CellStats:
    """Per-cell success EMA and attempt counts over equal arclength bins."""

    ema_success: np.ndarray
    counts: np.ndarray
    decay: float = 0.99

    @classmethod
    def new(cls, n_cells: int = 16, decay: float = 0.99) -> "CellStats":
        return cls(ema_success=np.zeros(n_cells), counts=np.zeros(n_cells, dtype=np.int64), decay=decay)

    @classmethod
    def from_dict(cls, data: dict) -> "CellStats":
        """Restore statistics written by to_dict()."""
        return cls(
            ema_success=np.asarray(data["ema_success"], dtype=np.float64),
            counts=np.asarray(data["counts"], dtype=np.int64),
            decay=float(data["decay"]),
        )

    def to_dict(self) -> dict:
        """Per-cell statistics as plain lists."""
        return {
            "ema_success": self.ema_success.tolist(),
            "counts": self.counts.tolist(),
            "decay": self.decay,
        }

    @property
    def n_cells(self) -> int:
        return len(self.ema_success)

    def copy(self) -> "CellStats":
        return CellStats(self.ema_success.copy(), self.counts.copy(), self.decay)


def update_cell(stats: CellStats, cell: int, success: bool) -> CellStats:
    """Fold one outcome into the EMA of the cell that held the target."""
    if not 0 <= cell < stats.n_cells:
        raise IndexError(f"cell {cell} out of range 0..{stats.n_cells - 1}")
    stats.ema_success[cell] = stats.decay * stats.ema_success[cell] + (1.0 - stats.decay) * (1.0 if success else 0.0)
    stats.counts[cell] += 1
    return stats


def cell_of(center_s: float, surface_length: float, n_cells: int) -> int:
    cell = int(center_s / surface_length * n_cells)
    return min(max(cell, 0), n_cells - 1)


def cell_probabilities(stats: CellStats, epsilon: float) -> np.ndarray:
    weights = (1.0 - stats.ema_success) + epsilon
    return weights / weights.sum()


def _draw_in_cell(rng: np.random.Generator, probs: np.ndarray, radius: float, surface_length: float) -> float:
    n_cells = len(probs)
    cell = int(rng.choice(n_cells, p=probs))
    width = surface_length / n_cells
    center = rng.uniform(cell * width, (cell + 1) * width)
    # The whole interval has to fit on screen
    return float(np.clip(center, radius, surface_length - radius))


def sample_target(stats: CellStats, stage: int, rng: np.random.Generator, current_s: Optional[float],
                  config: SamplerConfig, extrusion: float, surface_length: float,
                  radius: Optional[float] = None, uniform_cells: bool = False) -> Target:
    """
    Next target for the given curriculum stage.

    Args:
        current_s: Fingertip projection onto the screen (arclength), used in stage 4.
        radius: Fixed radius instead of the uniform draw (evaluation, no-curriculum runs).
        uniform_cells: Ignore the success statistics and draw cells uniformly.
    """
    if stage <= S2:
        center = config.fixed_center_s if config.fixed_center_s is not None else surface_length / 2.0
        return Target(center_s=center, radius=config.fixed_radius, extrusion_depth=extrusion)

    if uniform_cells:
        probs = np.full(stats.n_cells, 1.0 / stats.n_cells)
    else:
        probs = cell_probabilities(stats, config.epsilon)
    r = radius if radius is not None else float(rng.uniform(config.radius_min, config.radius_max))
    center = _draw_in_cell(rng, probs, r, surface_length)

    if stage == S4 and current_s is not None:
        redraws = 0
        while abs(center - current_s) < config.s4_min_offset and redraws < config.s4_max_redraws:
            center = _draw_in_cell(rng, probs, r, surface_length)
            redraws += 1

    return Target(center_s=center, radius=r, extrusion_depth=0.0)
