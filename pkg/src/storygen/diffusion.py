"""Noise schedule, closed-form forward noising, ancestral reverse step,
and the noise-prediction training loss.

Timesteps are 1-based: t ranges over 1..T and beta_t = betas[t-1].
Schedule constants are kept in float64 and cast to the operand dtype.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

DEFAULT_T = 200
DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.05


@dataclass(frozen=True)
class NoiseSchedule:
    betas: torch.Tensor  # (T,) float64
    alphas: torch.Tensor  # (T,) float64, 1 - beta
    alpha_bars: torch.Tensor  # (T,) float64, cumulative product of alphas

    @property
    def T(self) -> int:
        return self.betas.shape[0]

    def to_dict(self) -> dict:
        return {
            "T": self.T,
            "beta_start": float(self.betas[0]),
            "beta_end": float(self.betas[-1]),
        }

    @staticmethod
    def from_dict(d: dict) -> "NoiseSchedule":
        return make_schedule(d["T"], d["beta_start"], d["beta_end"])


def make_schedule(
    T: int = DEFAULT_T,
    beta_start: float = DEFAULT_BETA_START,
    beta_end: float = DEFAULT_BETA_END,
) -> NoiseSchedule:
    if T < 2:
        raise ValueError("schedule needs at least 2 steps")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError("betas must satisfy 0 < beta_start <= beta_end < 1")
    betas = torch.linspace(beta_start, beta_end, T, dtype=torch.float64)
    alphas = 1.0 - betas
    alpha_bars = torch.cumprod(alphas, dim=0)
    return NoiseSchedule(betas=betas, alphas=alphas, alpha_bars=alpha_bars)


def _check_t(t: torch.Tensor, T: int) -> None:
    if t.min().item() < 1 or t.max().item() > T:
        raise ValueError(f"timestep out of range 1..{T}")


def _gather(values: torch.Tensor, t: torch.Tensor, like: torch.Tensor) -> torch.Tensor:
    """Index per-item schedule constants and reshape for broadcasting."""
    out = values[t - 1].to(like.dtype)
    return out.reshape(t.shape + (1,) * (like.dim() - t.dim()))


def q_sample(
    z0: torch.Tensor, t: int | torch.Tensor, eps: torch.Tensor, schedule: NoiseSchedule
) -> torch.Tensor:
    """Forward marginal: sqrt(abar_t) z0 + sqrt(1 - abar_t) eps."""
    if eps.shape != z0.shape:
        raise ValueError("eps shape must match z0")
    t = torch.as_tensor(t, dtype=torch.long)
    _check_t(t, schedule.T)
    ab = _gather(schedule.alpha_bars, t, z0)
    return torch.sqrt(ab) * z0 + torch.sqrt(1.0 - ab) * eps


def p_sample_step(
    z_t: torch.Tensor,
    t: int,
    eps_pred: torch.Tensor,
    schedule: NoiseSchedule,
    rng: torch.Generator | None = None,
) -> torch.Tensor:
    """One ancestral reverse step; the t=1 step adds no noise."""
    if eps_pred.shape != z_t.shape:
        raise ValueError("eps_pred shape must match z_t")
    if t < 1 or t > schedule.T:
        raise ValueError(f"timestep out of range 1..{schedule.T}")
    beta = schedule.betas[t - 1].to(z_t.dtype)
    alpha = schedule.alphas[t - 1].to(z_t.dtype)
    ab_t = schedule.alpha_bars[t - 1].to(z_t.dtype)
    mean = (z_t - beta / torch.sqrt(1.0 - ab_t) * eps_pred) / torch.sqrt(alpha)
    if t == 1:
        return mean
    ab_prev = schedule.alpha_bars[t - 2].to(z_t.dtype)
    sigma = torch.sqrt(beta * (1.0 - ab_prev) / (1.0 - ab_t))
    noise = torch.randn(
        z_t.shape, generator=rng, dtype=z_t.dtype, device=z_t.device
    )
    return mean + sigma * noise


def training_loss(eps: torch.Tensor, eps_pred: torch.Tensor) -> torch.Tensor:
    """Mean squared error over all elements."""
    if eps.shape != eps_pred.shape:
        raise ValueError("eps and eps_pred shapes must match")
    return torch.mean((eps - eps_pred) ** 2)
