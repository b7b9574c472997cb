"""Time- and frame-position-conditioned U-Net noise predictor.

Three resolution levels over the latent grid.  After the residual block
at every level (down path, middle, up path) the features pass through a
fused cross-attention + memory-attention site.  Remembered frames enter
through small strided-conv adapters that map clean latents to each
site's spatial size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import torch
from torch import nn

from .attention import (
    CrossAttention,
    MemoryAttention,
    MemoryEntry,
    VisualMemory,
    fuse_attention,
)
from .textenc import SentenceEncoding


@dataclass(frozen=True)
class UNetConfig:
    in_channels: int = 4
    latent_size: int = 8
    base_channels: int = 64
    channel_mults: tuple[int, ...] = (1, 2, 4)
    txt_dim: int = 128
    time_dim: int = 128
    frame_slots: int = 16
    use_frame_embedding: bool = True
    use_memory: bool = True
    norm_groups: int = 8
    max_t: int = 200

    @property
    def levels(self) -> int:
        return len(self.channel_mults)

    @property
    def channels(self) -> tuple[int, ...]:
        return tuple(self.base_channels * m for m in self.channel_mults)

    @property
    def resolutions(self) -> tuple[int, ...]:
        return tuple(self.latent_size // 2**i for i in range(self.levels))

    def validate(self) -> None:
        if self.latent_size % 2 ** (self.levels - 1) != 0:
            raise ValueError("latent size must be divisible by 2^(levels-1)")
        if self.time_dim % 2 != 0:
            raise ValueError("time embedding dim must be even")

    def to_dict(self) -> dict:
        return {
            "in_channels": self.in_channels,
            "latent_size": self.latent_size,
            "base_channels": self.base_channels,
            "channel_mults": list(self.channel_mults),
            "txt_dim": self.txt_dim,
            "time_dim": self.time_dim,
            "frame_slots": self.frame_slots,
            "use_frame_embedding": self.use_frame_embedding,
            "use_memory": self.use_memory,
            "norm_groups": self.norm_groups,
            "max_t": self.max_t,
        }

    @staticmethod
    def from_dict(d: dict) -> "UNetConfig":
        d = dict(d)
        d["channel_mults"] = tuple(d["channel_mults"])
        return UNetConfig(**d)


@dataclass(frozen=True)
class ConditioningBundle:
    """Everything frame m's denoising step is allowed to see."""

    sentence: SentenceEncoding
    memory: VisualMemory
    frame_index: int
    timestep: int

    def validate(self) -> None:
        for e in self.memory.entries:
            if e.frame_index >= self.frame_index:
                raise ValueError("memory entry from the present or future")


def sinusoidal_time(t: torch.Tensor, dim: int) -> torch.Tensor:
    """Sin/cos features of integer timesteps, shape (..., dim)."""
    half = dim // 2
    freqs = torch.exp(
        -math.log(10000.0) * torch.arange(half, dtype=torch.float64) / half
    ).to(t.device)
    angle = t.to(torch.float64)[..., None] * freqs
    return torch.cat([torch.sin(angle), torch.cos(angle)], dim=-1)


def _groups(preferred: int, channels: int) -> int:
    return math.gcd(preferred, channels)


class ResBlock(nn.Module):
    def __init__(self, in_c: int, out_c: int, emb_dim: int, groups: int):
        super().__init__()
        self.norm1 = nn.GroupNorm(_groups(groups, in_c), in_c)
        self.conv1 = nn.Conv2d(in_c, out_c, 3, padding=1)
        self.emb_proj = nn.Linear(emb_dim, out_c)
        self.norm2 = nn.GroupNorm(_groups(groups, out_c), out_c)
        self.conv2 = nn.Conv2d(out_c, out_c, 3, padding=1)
        self.skip = nn.Conv2d(in_c, out_c, 1) if in_c != out_c else nn.Identity()

    def forward(self, x: torch.Tensor, emb: torch.Tensor) -> torch.Tensor:
        h = self.conv1(torch.nn.functional.silu(self.norm1(x)))
        # Conditioning is added after the norm; a norm group of width one
        # would otherwise cancel a per-channel constant shift exactly.
        h = self.norm2(h) + self.emb_proj(torch.nn.functional.silu(emb))[:, :, None, None]
        h = self.conv2(torch.nn.functional.silu(h))
        return h + self.skip(x)


class AttentionSite(nn.Module):
    """Cross + memory attention fused additively onto the features."""

    def __init__(self, channels: int, txt_dim: int, groups: int):
        super().__init__()
        self.norm = nn.GroupNorm(_groups(groups, channels), channels)
        self.cross = CrossAttention(channels, txt_dim)
        self.memory = MemoryAttention(channels, txt_dim, mem_channels=channels)

    def forward(self, x, token_matrix, token_mask, sent_pooled, mem_keys, mem_values, entry_mask):
        h = self.norm(x)
        c_out = self.cross(h, token_matrix, token_mask)
        b, c, hh, ww = x.shape
        if mem_keys is None:
            m_out = torch.zeros_like(c_out)
        else:
            m_out = self.memory(sent_pooled, mem_keys, mem_values, entry_mask, (c, hh, ww))
        return fuse_attention(c_out, m_out, x)


class MemoryAdapter(nn.Module):
    """Maps a clean latent to one attention site's spatial size/width."""

    def __init__(self, in_c: int, channels: tuple[int, ...], level: int):
        super().__init__()
        layers: list[nn.Module] = [nn.Conv2d(in_c, channels[0], 3, padding=1)]
        for j in range(1, level + 1):
            layers += [nn.SiLU(), nn.Conv2d(channels[j - 1], channels[j], 3, stride=2, padding=1)]
        self.net = nn.Sequential(*layers)

    def forward(self, z0: torch.Tensor) -> torch.Tensor:
        return self.net(z0)


class UNet(nn.Module):
    def __init__(self, config: UNetConfig):
        super().__init__()
        config.validate()
        self.config = config
        ch = config.channels
        g = config.norm_groups
        txt = config.txt_dim

        self.time_mlp = nn.Sequential(
            nn.Linear(config.time_dim, config.time_dim),
            nn.SiLU(),
            nn.Linear(config.time_dim, config.time_dim),
        )
        if config.use_frame_embedding:
            self.frame_embed = nn.Embedding(config.frame_slots, config.time_dim)
        else:
            self.frame_embed = None

        self.conv_in = nn.Conv2d(config.in_channels, ch[0], 3, padding=1)

        self.down_blocks = nn.ModuleList()
        self.down_attn = nn.ModuleList()
        self.downsamples = nn.ModuleList()
        prev = ch[0]
        for i, c in enumerate(ch):
            self.down_blocks.append(ResBlock(prev, c, config.time_dim, g))
            self.down_attn.append(AttentionSite(c, txt, g))
            if i < config.levels - 1:
                self.downsamples.append(nn.Conv2d(c, c, 3, stride=2, padding=1))
            prev = c

        self.mid_block1 = ResBlock(ch[-1], ch[-1], config.time_dim, g)
        self.mid_attn = AttentionSite(ch[-1], txt, g)
        self.mid_block2 = ResBlock(ch[-1], ch[-1], config.time_dim, g)

        self.up_blocks = nn.ModuleList()
        self.up_attn = nn.ModuleList()
        self.upsamples = nn.ModuleList()
        prev = ch[-1]
        for i in reversed(range(config.levels - 1)):
            self.upsamples.append(nn.ConvTranspose2d(prev, prev, 2, stride=2))
            self.up_blocks.append(ResBlock(prev + ch[i], ch[i], config.time_dim, g))
            self.up_attn.append(AttentionSite(ch[i], txt, g))
            prev = ch[i]

        self.out_norm = nn.GroupNorm(_groups(g, ch[0]), ch[0])
        self.out_conv = nn.Conv2d(ch[0], config.in_channels, 3, padding=1)

        self.adapters = nn.ModuleList(
            MemoryAdapter(config.in_channels, ch, level=i) for i in range(config.levels)
        )

    # -- conditioning embeddings ------------------------------------------

    def time_embedding(self, t: torch.Tensor) -> torch.Tensor:
        if t.min().item() < 1 or t.max().item() > self.config.max_t:
            raise ValueError(f"timestep out of range 1..{self.config.max_t}")
        sin = sinusoidal_time(t, self.config.time_dim).to(self.conv_in.weight.dtype)
        return self.time_mlp(sin)

    def frame_embedding(self, m: torch.Tensor) -> torch.Tensor:
        if m.min().item() < 0 or m.max().item() >= self.config.frame_slots:
            raise ValueError(f"frame index out of range 0..{self.config.frame_slots - 1}")
        if self.frame_embed is None:
            return torch.zeros(
                *m.shape, self.config.time_dim, dtype=self.conv_in.weight.dtype, device=m.device
            )
        return self.frame_embed(m)

    # -- memory plumbing ---------------------------------------------------

    def build_memory_entry(
        self, z0: torch.Tensor, sent_pooled: torch.Tensor, frame_index: int
    ) -> MemoryEntry:
        """Adapter features at every site resolution for one clean latent."""
        return self.build_memory_entries(z0[None], sent_pooled[None], [frame_index])[0]

    def build_memory_entries(
        self,
        z0s: torch.Tensor,  # (K, c, h, w) clean latents
        sent_pooled: torch.Tensor,  # (K, txt_dim)
        frame_indices: Sequence[int],
    ) -> list[MemoryEntry]:
        """Batched adapter pass shared by training and sampling."""
        feats_by_res = {
            res: adapter(z0s)
            for res, adapter in zip(self.config.resolutions, self.adapters)
        }
        return [
            MemoryEntry(
                frame_index=idx,
                sent_pooled=sent_pooled[k],
                feats={res: feats_by_res[res][k] for res in feats_by_res},
            )
            for k, idx in enumerate(frame_indices)
        ]

    def _stack_memories(
        self, memories: Sequence[VisualMemory], m: torch.Tensor, like: torch.Tensor
    ):
        """Pad per-sample memories (entries with frame_index < m only) into
        batched key/value tensors; returns None when every memory is empty."""
        batch_entries = [
            mem.before(int(mi)) for mem, mi in zip(memories, m.tolist())
        ]
        k_max = max(len(es) for es in batch_entries)
        if k_max == 0:
            return None, None, None
        b = len(batch_entries)
        txt = self.config.txt_dim
        keys = like.new_zeros(b, k_max, txt)
        mask = torch.zeros(b, k_max, dtype=torch.bool, device=like.device)
        values = {
            res: like.new_zeros(b, k_max, c, res, res)
            for res, c in zip(self.config.resolutions, self.config.channels)
        }
        for i, es in enumerate(batch_entries):
            for j, e in enumerate(es):
                keys[i, j] = e.sent_pooled
                mask[i, j] = True
                for res in self.config.resolutions:
                    if res not in e.feats:
                        raise KeyError(f"memory entry lacks features at resolution {res}")
                    values[res][i, j] = e.feats[res]
        return keys, values, mask

    # -- forward -----------------------------------------------------------

    def forward(
        self,
        z_t: torch.Tensor,  # (B, c, h, w)
        t: torch.Tensor,  # (B,) 1-based
        m: torch.Tensor,  # (B,) frame indices
        token_matrix: torch.Tensor,  # (B, L, txt_dim)
        token_mask: torch.Tensor,  # (B, L)
        sent_pooled: torch.Tensor,  # (B, txt_dim)
        memories: Sequence[VisualMemory],
    ) -> torch.Tensor:
        # The embedding table saturates at its last slot for long stories;
        # memory filtering still uses the true frame index.
        m_slot = m.clamp(max=self.config.frame_slots - 1)
        emb = self.time_embedding(t) + self.frame_embedding(m_slot)
        if self.config.use_memory:
            keys, values, entry_mask = self._stack_memories(memories, m, z_t)
        else:
            keys = values = entry_mask = None

        def attend(site: AttentionSite, x: torch.Tensor, res: int) -> torch.Tensor:
            mv = None if keys is None else values[res]
            return site(x, token_matrix, token_mask, sent_pooled, keys, mv, entry_mask)

        res_by_level = self.config.resolutions
        x = self.conv_in(z_t)
        skips = []
        for i in range(self.config.levels):
            x = self.down_blocks[i](x, emb)
            x = attend(self.down_attn[i], x, res_by_level[i])
            skips.append(x)
            if i < self.config.levels - 1:
                x = self.downsamples[i](x)

        x = self.mid_block1(x, emb)
        x = attend(self.mid_attn, x, res_by_level[-1])
        x = self.mid_block2(x, emb)

        for j, i in enumerate(reversed(range(self.config.levels - 1))):
            x = self.upsamples[j](x)
            x = torch.cat([x, skips[i]], dim=1)
            x = self.up_blocks[j](x, emb)
            x = attend(self.up_attn[j], x, res_by_level[i])

        return self.out_conv(torch.nn.functional.silu(self.out_norm(x)))


def predict_noise(model: UNet, z_t: torch.Tensor, bundle: ConditioningBundle) -> torch.Tensor:
    """Single-sample noise prediction from a conditioning bundle."""
    bundle.validate()
    enc = bundle.sentence
    out = model(
        z_t[None],
        torch.tensor([bundle.timestep]),
        torch.tensor([bundle.frame_index]),
        enc.token_matrix[None],
        enc.mask[None],
        enc.pooled[None],
        [bundle.memory],
    )
    return out[0]


def count_params(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
