"""Frozen convolutional autoencoder between 32x32 RGB frames and
8x8x4 latents, with a single scalar rescaling so train-split latents
have roughly unit standard deviation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import torch
from torch import nn


@dataclass(frozen=True)
class CodecConfig:
    downsample: int = 4
    latent_channels: int = 4
    hidden: tuple[int, ...] = (32, 64)
    lr: float = 4e-3
    epochs: int = 40
    batch_size: int = 64

    def validate(self) -> None:
        if self.downsample != 2 ** (len(self.hidden)):
            raise ValueError("downsample factor must be 2^len(hidden)")

    def to_dict(self) -> dict:
        return {
            "downsample": self.downsample,
            "latent_channels": self.latent_channels,
            "hidden": list(self.hidden),
            "lr": self.lr,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
        }

    @staticmethod
    def from_dict(d: dict) -> "CodecConfig":
        d = dict(d)
        d["hidden"] = tuple(d["hidden"])
        return CodecConfig(**d)


class LatentCodec(nn.Module):
    def __init__(self, config: CodecConfig = CodecConfig()):
        super().__init__()
        config.validate()
        self.config = config
        h = config.hidden
        enc: list[nn.Module] = []
        prev = 3
        for width in h:
            enc += [nn.Conv2d(prev, width, 3, stride=2, padding=1), nn.SiLU()]
            prev = width
        enc.append(nn.Conv2d(prev, config.latent_channels, 3, padding=1))
        self.encoder = nn.Sequential(*enc)

        dec: list[nn.Module] = [nn.Conv2d(config.latent_channels, h[-1], 3, padding=1), nn.SiLU()]
        prev = h[-1]
        for width in reversed(h):
            dec += [nn.ConvTranspose2d(prev, width, 4, stride=2, padding=1), nn.SiLU()]
            prev = width
        dec.append(nn.Conv2d(prev, 3, 3, padding=1))
        self.decoder = nn.Sequential(*dec)
        # Output squashed to [0,1]; latents divided by this before decoding.
        self.register_buffer("latent_scale", torch.tensor(1.0))

    def _check_image(self, images: torch.Tensor) -> None:
        if images.dim() != 4 or images.shape[1] != 3:
            raise ValueError("expected (B, 3, H, W) images")
        f = self.config.downsample
        if images.shape[2] % f or images.shape[3] % f:
            raise ValueError(f"spatial dims must be divisible by {f}")

    def encode(self, images: torch.Tensor) -> torch.Tensor:
        single = images.dim() == 3
        if single:
            images = images[None]
        self._check_image(images)
        z = self.encoder(images) * self.latent_scale
        return z[0] if single else z

    def decode(self, latents: torch.Tensor) -> torch.Tensor:
        single = latents.dim() == 3
        if single:
            latents = latents[None]
        if latents.shape[1] != self.config.latent_channels:
            raise ValueError("latent channel count mismatch")
        x = torch.sigmoid(self.decoder(latents / self.latent_scale))
        return x[0] if single else x

    def reconstruct(self, images: torch.Tensor) -> torch.Tensor:
        return self.decode(self.encode(images))


def psnr(a: torch.Tensor, b: torch.Tensor) -> float:
    """Peak signal-to-noise ratio in dB for images in [0, 1]."""
    mse = torch.mean((a - b) ** 2).item()
    if mse == 0:
        return float("inf")
    return 10.0 * torch.log10(torch.tensor(1.0 / mse)).item()


def train_codec(
    frames: torch.Tensor,
    config: CodecConfig = CodecConfig(),
    seed: int = 0,
    log: list | None = None,
) -> LatentCodec:
    """Fit the autoencoder with MSE and freeze the latent rescaling.

    frames: (N, 3, H, W) in [0, 1].  Raises on NaN loss.
    """
    torch.manual_seed(seed)
    codec = LatentCodec(config)
    codec.train()
    opt = torch.optim.Adam(codec.parameters(), lr=config.lr)
    gen = torch.Generator().manual_seed(seed)
    n = frames.shape[0]
    total_steps = config.epochs * max(1, -(-n // config.batch_size))
    step = 0
    for epoch in range(config.epochs):
        order = torch.randperm(n, generator=gen)
        for start in range(0, n, config.batch_size):
            for group in opt.param_groups:
                group["lr"] = config.lr * 0.5 * (1.0 + math.cos(math.pi * step / total_steps))
            step += 1
            batch = frames[order[start : start + config.batch_size]]
            recon = torch.sigmoid(codec.decoder(codec.encoder(batch)))
            loss = torch.mean((recon - batch) ** 2)
            if not torch.isfinite(loss):
                raise RuntimeError(
                    f"codec training diverged (loss={loss.item()}) at epoch {epoch}"
                )
            opt.zero_grad()
            loss.backward()
            opt.step()
        if log is not None:
            log.append(loss.item())
    codec.eval()
    with torch.no_grad():
        sample = frames[: min(n, 2000)]
        std = codec.encoder(sample).std().clamp(min=1e-8)
        codec.latent_scale.fill_(1.0 / std)
    return codec


def save_codec(codec: LatentCodec, path: str | Path) -> None:
    torch.save(
        {"config": codec.config.to_dict(), "state": codec.state_dict()}, path
    )


def load_codec(path: str | Path) -> LatentCodec:
    blob = torch.load(path, map_location="cpu", weights_only=True)
    codec = LatentCodec(CodecConfig.from_dict(blob["config"]))
    codec.load_state_dict(blob["state"])
    codec.eval()
    return codec
