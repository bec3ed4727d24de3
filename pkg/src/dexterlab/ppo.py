"""
PPO Learner

Gaussian policy and value MLPs (separate, two tanh hidden layers each),
GAE, and the clipped-surrogate update with linearly decayed learning rate
and clip range. Masked channels are sampled like the others but left out of
log-probabilities, ratios and entropy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import torch
import torch.nn as nn
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .errors import NumericalInstabilityError
from .masking import ActionMask, ScheduleSpec, schedule_value

LOG_2PI = math.log(2.0 * math.pi)


class PPOConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    hidden: int = 256
    lr0: float = 6e-4
    clip0: float = Field(0.2, ge=0.0)
    gamma: float = Field(0.99, ge=0.0, le=1.0)
    gae_lambda: float = Field(0.95, ge=0.0, le=1.0)
    epochs_per_update: int = Field(10, ge=1)
    minibatch_size: int = Field(256, ge=1)
    entropy_coef: float = 0.001
    value_coef: float = 0.5
    max_grad_norm: float = Field(0.5, gt=0.0)
    init_log_std: float = math.log(0.3)
    adam_eps: float = Field(1e-5, gt=0.0)

    @field_validator("hidden")
    @classmethod
    def _square_sizes(cls, v: int) -> int:
        if v not in (128, 256, 512):
            raise ValueError("hidden must be one of 128, 256, 512")
        return v

    @field_validator("lr0", "entropy_coef", "value_coef", "init_log_std")
    @classmethod
    def _finite(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError("must be finite")
        return v


def _mlp(in_dim: int, hidden: int, out_dim: int, out_gain: float) -> nn.Sequential:
    net = nn.Sequential(
        nn.Linear(in_dim, hidden), nn.Tanh(),
        nn.Linear(hidden, hidden), nn.Tanh(),
        nn.Linear(hidden, out_dim),
    )
    linears = [m for m in net if isinstance(m, nn.Linear)]
    for layer, gain in zip(linears, (math.sqrt(2.0), math.sqrt(2.0), out_gain)):
        nn.init.orthogonal_(layer.weight, gain=gain)
        nn.init.zeros_(layer.bias)
    return net


class ActorCritic(nn.Module):
    """Policy MLP with a state-independent log_std, plus a separate value MLP."""

    def __init__(self, obs_dim: int, act_dim: int, hidden: int,
                 init_log_std: float = math.log(0.3), dtype: torch.dtype = torch.float32):
        super().__init__()
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.hidden = hidden
        self.policy = _mlp(obs_dim, hidden, act_dim, out_gain=0.01)
        self.log_std = nn.Parameter(torch.full((act_dim,), float(init_log_std)))
        self.value = _mlp(obs_dim, hidden, 1, out_gain=1.0)
        self.to(dtype)

    @property
    def dtype(self) -> torch.dtype:
        return self.log_std.dtype

    def _check_obs(self, obs: torch.Tensor) -> None:
        if obs.shape[-1] != self.obs_dim:
            raise ValueError(f"observation has {obs.shape[-1]} features, network expects {self.obs_dim}")

    def forward(self, obs: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        self._check_obs(obs)
        mean = self.policy(obs)
        return mean, self.log_std.expand_as(mean), self.value(obs).squeeze(-1)


def policy_forward(model: ActorCritic, obs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Action means and log standard deviations for one or more observations."""
    with torch.no_grad():
        x = torch.as_tensor(obs, dtype=model.dtype)
        model._check_obs(x)
        mean = model.policy(x).detach()
        return mean.double().numpy(), model.log_std.detach().expand_as(mean).double().numpy()


def value_forward(model: ActorCritic, obs: np.ndarray) -> np.ndarray:
    with torch.no_grad():
        x = torch.as_tensor(obs, dtype=model.dtype)
        model._check_obs(x)
        return model.value(x).squeeze(-1).detach().double().numpy()


def gaussian_log_prob(raw: np.ndarray, mean: np.ndarray, log_std: np.ndarray,
                      channels: np.ndarray) -> float | np.ndarray:
    """Diagonal Gaussian log-density over `channels`; leading axes are a batch."""
    z = (raw[..., channels] - mean[..., channels]) / np.exp(log_std[..., channels])
    terms = np.sum(-0.5 * z * z - log_std[..., channels] - 0.5 * LOG_2PI, axis=-1)
    return float(terms) if np.ndim(terms) == 0 else terms


def sample_action(mean: np.ndarray, log_std: np.ndarray, rng: np.random.Generator,
                  mask: ActionMask) -> tuple[np.ndarray, np.ndarray, float | np.ndarray]:
    """
    Draw one action, or one per row when mean has leading batch axes.

    Returns:
        (env_action clamped to [0,1], raw Gaussian sample, log_prob of the raw
        sample over the enabled channels)
    """
    raw = mean + np.exp(log_std) * rng.standard_normal(mean.shape)
    log_prob = gaussian_log_prob(raw, mean, log_std, mask.enabled_indices)
    return np.clip(raw, 0.0, 1.0), raw, log_prob


def deterministic_action(mean: np.ndarray) -> np.ndarray:
    return np.clip(mean, 0.0, 1.0)


@dataclass
class RolloutBatch:
    """
    Transitions laid out (horizon, n_envs, ...).

    dones marks the last step of an episode; terminals marks the ones that
    must not bootstrap (success, out of bounds). next_values holds V of the
    following observation (or of the final observation on a timeout).
    """

    observations: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    next_values: np.ndarray
    dones: np.ndarray
    terminals: np.ndarray
    advantages: Optional[np.ndarray] = None
    returns: Optional[np.ndarray] = None
    reward_terms: dict[str, float] = field(default_factory=dict)

    def __len__(self) -> int:
        return int(np.prod(self.rewards.shape))

    def flat(self, name: str) -> np.ndarray:
        arr = getattr(self, name)
        lead = int(np.prod(self.rewards.shape))
        return arr.reshape(lead, *arr.shape[self.rewards.ndim:])


def compute_gae(batch: RolloutBatch, gamma: float, lam: float) -> RolloutBatch:
    """Fill advantages and returns by the backward GAE recursion."""
    rewards = batch.rewards
    advantages = np.zeros_like(rewards, dtype=np.float64)
    last = np.zeros(rewards.shape[1:], dtype=np.float64)
    for t in reversed(range(rewards.shape[0])):
        bootstrap = 1.0 - batch.terminals[t]
        delta = rewards[t] + gamma * batch.next_values[t] * bootstrap - batch.values[t]
        last = delta + gamma * lam * (1.0 - batch.dones[t]) * last
        advantages[t] = last
    batch.advantages = advantages
    batch.returns = advantages + batch.values
    return batch


def normalize_advantages(advantages: np.ndarray) -> np.ndarray:
    return (advantages - advantages.mean()) / max(float(advantages.std()), 1e-8)


@dataclass
class LossTerms:
    total: torch.Tensor
    policy: torch.Tensor
    value: torch.Tensor
    entropy: torch.Tensor
    clip_fraction: torch.Tensor
    approx_kl: torch.Tensor
    ratio: torch.Tensor


def ppo_loss(model: ActorCritic, obs: torch.Tensor, actions: torch.Tensor, old_log_probs: torch.Tensor,
             advantages: torch.Tensor, returns: torch.Tensor, clip: float, config: PPOConfig,
             channels: torch.Tensor) -> LossTerms:
    """Clipped surrogate + value MSE - entropy bonus over the enabled channels."""
    mean, log_std, value = model(obs)
    mean = mean.index_select(-1, channels)
    log_std = log_std.index_select(-1, channels)
    act = actions.index_select(-1, channels)

    z = (act - mean) / log_std.exp()
    log_prob = (-0.5 * z * z - log_std - 0.5 * LOG_2PI).sum(-1)
    entropy = (0.5 + 0.5 * LOG_2PI + log_std).sum(-1).mean()

    log_ratio = log_prob - old_log_probs
    ratio = log_ratio.exp()
    surrogate = torch.min(ratio * advantages, ratio.clamp(1.0 - clip, 1.0 + clip) * advantages)
    policy_loss = -surrogate.mean()
    value_loss = ((value - returns) ** 2).mean()
    total = policy_loss + config.value_coef * value_loss - config.entropy_coef * entropy

    with torch.no_grad():
        clip_fraction = ((ratio - 1.0).abs() > clip).to(ratio.dtype).mean()
        approx_kl = ((ratio - 1.0) - log_ratio).mean()
    return LossTerms(total, policy_loss, value_loss, entropy, clip_fraction, approx_kl, ratio)


def _scalar(x: torch.Tensor) -> float:
    return x.detach().item()


def _finite_parameters(model: nn.Module) -> bool:
    return all(bool(torch.isfinite(p).all()) for p in model.parameters())


def make_optimizer(model: ActorCritic, config: PPOConfig) -> torch.optim.Adam:
    return torch.optim.Adam(model.parameters(), lr=config.lr0, eps=config.adam_eps)


def ppo_update(model: ActorCritic, optimizer: torch.optim.Optimizer, batch: RolloutBatch, config: PPOConfig,
               t: int, total_timesteps: int, mask: ActionMask, rng: np.random.Generator) -> dict[str, float]:
    """
    Run epochs x shuffled minibatches of clipped-surrogate updates.

    Raises:
        NumericalInstabilityError: On a non-finite loss, gradient or parameter.
    """
    if batch.advantages is None or batch.returns is None:
        raise ValueError("compute_gae() must run before ppo_update()")
    lr = schedule_value(ScheduleSpec(config.lr0, total_timesteps), t)
    clip = schedule_value(ScheduleSpec(config.clip0, total_timesteps), t)
    for group in optimizer.param_groups:
        group["lr"] = lr

    dtype = model.dtype
    obs = torch.as_tensor(batch.flat("observations"), dtype=dtype)
    actions = torch.as_tensor(batch.flat("actions"), dtype=dtype)
    old_log_probs = torch.as_tensor(batch.flat("log_probs"), dtype=dtype)
    advantages = torch.as_tensor(normalize_advantages(batch.flat("advantages")), dtype=dtype)
    returns = torch.as_tensor(batch.flat("returns"), dtype=dtype)
    channels = torch.as_tensor(mask.enabled_indices, dtype=torch.long)

    sums = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0, "clip_fraction": 0.0, "approx_kl": 0.0}
    n_minibatches = 0
    n = obs.shape[0]
    for epoch in range(config.epochs_per_update):
        order = torch.as_tensor(rng.permutation(n), dtype=torch.long)
        for start in range(0, n, config.minibatch_size):
            idx = order[start:start + config.minibatch_size]
            terms = ppo_loss(model, obs[idx], actions[idx], old_log_probs[idx], advantages[idx],
                             returns[idx], clip, config, channels)
            diagnostics = {
                "timestep": t,
                "epoch": epoch,
                "minibatch_start": start,
                "policy_loss": _scalar(terms.policy),
                "value_loss": _scalar(terms.value),
                "entropy": _scalar(terms.entropy),
                "lr": lr,
                "clip": clip,
            }
            if not torch.isfinite(terms.total):
                raise NumericalInstabilityError("non-finite PPO loss", diagnostics)

            optimizer.zero_grad()
            terms.total.backward()
            grad_norm = nn.utils.clip_grad_norm_(model.parameters(), config.max_grad_norm)
            if not torch.isfinite(grad_norm):
                raise NumericalInstabilityError("non-finite gradient", {**diagnostics, "grad_norm": _scalar(grad_norm)})
            optimizer.step()

            sums["policy_loss"] += _scalar(terms.policy)
            sums["value_loss"] += _scalar(terms.value)
            sums["entropy"] += _scalar(terms.entropy)
            sums["clip_fraction"] += _scalar(terms.clip_fraction)
            sums["approx_kl"] += _scalar(terms.approx_kl)
            n_minibatches += 1

    if not _finite_parameters(model):
        raise NumericalInstabilityError("non-finite parameters after update", {"timestep": t, "lr": lr, "clip": clip})

    stats = {k: v / max(n_minibatches, 1) for k, v in sums.items()}
    stats.update({"lr": lr, "clip": clip, "n_minibatches": float(n_minibatches)})
    return stats
