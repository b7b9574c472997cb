"""Cross-attention on the current sentence and memory-attention over
previously generated frames.

Cross-attention queries come from frame features, keys and values from
the sentence token matrix (PAD positions masked).  Memory-attention uses
one pooled-sentence key per remembered frame and that frame's adapted
latent feature map as the value; with no remembered frames it
contributes an exact zero.  Both paths are single-head with bias-free
projections and are combined additively on top of the frame features.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import torch
from torch import nn

MEMORY_CAPACITY = 16


def scaled_dot_attention(
    q: torch.Tensor, k: torch.Tensor, v: torch.Tensor, return_weights: bool = False
):
    """softmax(QK^T/sqrt(d_k))V over the last two dims; broadcasts batch dims."""
    if k.shape[-2] == 0:
        raise ValueError("attention requires at least one key")
    if q.shape[-1] != k.shape[-1]:
        raise ValueError("query/key dims disagree")
    if k.shape[-2] != v.shape[-2]:
        raise ValueError("key/value counts disagree")
    scores = q @ k.transpose(-2, -1) / math.sqrt(q.shape[-1])
    weights = torch.softmax(scores, dim=-1)
    out = weights @ v
    if return_weights:
        return out, weights
    return out


def _masked_attention(
    q: torch.Tensor, k: torch.Tensor, v: torch.Tensor, key_mask: torch.Tensor
) -> torch.Tensor:
    """Batched attention with invalid keys masked out.

    q: (B, n_q, d), k: (B, n_k, d), v: (B, n_k, d_v), key_mask: (B, n_k) bool.
    Batch rows with no valid key produce zeros.
    """
    scores = q @ k.transpose(-2, -1) / math.sqrt(q.shape[-1])
    has_key = key_mask.any(dim=-1)
    scores = scores.masked_fill(~key_mask[:, None, :], float("-inf"))
    scores = torch.where(has_key[:, None, None], scores, torch.zeros_like(scores))
    weights = torch.softmax(scores, dim=-1) * has_key[:, None, None].to(scores.dtype)
    return weights @ v


@dataclass(frozen=True)
class MemoryEntry:
    """One remembered frame: its pooled sentence and adapted latent maps."""

    frame_index: int
    sent_pooled: torch.Tensor  # (d_txt,)
    feats: Mapping[int, torch.Tensor]  # spatial size -> (C, size, size)


class VisualMemory:
    """Immutable ordered collection of MemoryEntry, oldest first."""

    __slots__ = ("entries",)

    def __init__(self, entries: tuple[MemoryEntry, ...] = ()):
        self.entries = tuple(entries)

    def __len__(self) -> int:
        return len(self.entries)

    def append(self, entry: MemoryEntry) -> "VisualMemory":
        """Return a new snapshot; oldest entries are dropped past capacity."""
        return VisualMemory((*self.entries, entry)[-MEMORY_CAPACITY:])

    def before(self, frame_index: int) -> tuple[MemoryEntry, ...]:
        return tuple(e for e in self.entries if e.frame_index < frame_index)


EMPTY_MEMORY = VisualMemory()


class CrossAttention(nn.Module):
    """Every spatial location of the frame attends over sentence tokens."""

    def __init__(self, channels: int, txt_dim: int):
        super().__init__()
        self.w_q = nn.Linear(channels, channels, bias=False)
        self.w_k = nn.Linear(txt_dim, channels, bias=False)
        self.w_v = nn.Linear(txt_dim, channels, bias=False)

    def forward(
        self,
        frame_feats: torch.Tensor,  # (B, C, H, W)
        token_matrix: torch.Tensor,  # (B, L, d_txt)
        token_mask: torch.Tensor,  # (B, L) bool, True at real tokens
    ) -> torch.Tensor:
        b, c, h, w = frame_feats.shape
        q = self.w_q(frame_feats.flatten(2).transpose(1, 2))  # (B, HW, C)
        k = self.w_k(token_matrix)
        v = self.w_v(token_matrix)
        out = _masked_attention(q, k, v, token_mask)
        return out.transpose(1, 2).reshape(b, c, h, w)


class MemoryAttention(nn.Module):
    """Pooled current sentence attends over one key per remembered frame.

    The attention weight for each remembered frame multiplies that
    frame's value map at every spatial position.
    """

    def __init__(self, channels: int, txt_dim: int, mem_channels: int | None = None):
        super().__init__()
        mem_channels = channels if mem_channels is None else mem_channels
        self.w_q = nn.Linear(txt_dim, txt_dim, bias=False)
        self.w_k = nn.Linear(txt_dim, txt_dim, bias=False)
        self.w_v = nn.Conv2d(mem_channels, channels, kernel_size=1, bias=False)

    def forward(
        self,
        sent_pooled: torch.Tensor,  # (B, d_txt)
        mem_keys: torch.Tensor,  # (B, K, d_txt) pooled sentences of remembered frames
        mem_values: torch.Tensor,  # (B, K, C_mem, H, W) adapted latent maps
        entry_mask: torch.Tensor,  # (B, K) bool, True at real entries
        out_shape: tuple[int, int, int],  # (C, H, W) of the attention site
    ) -> torch.Tensor:
        b = sent_pooled.shape[0]
        c, h, w = out_shape
        k_count = mem_keys.shape[1]
        if k_count == 0:
            return sent_pooled.new_zeros(b, c, h, w)
        q = self.w_q(sent_pooled)[:, None, :]  # (B, 1, d_txt)
        k = self.w_k(mem_keys)  # (B, K, d_txt)
        scores = q @ k.transpose(-2, -1) / math.sqrt(q.shape[-1])  # (B, 1, K)
        has_key = entry_mask.any(dim=-1)
        scores = scores.masked_fill(~entry_mask[:, None, :], float("-inf"))
        scores = torch.where(has_key[:, None, None], scores, torch.zeros_like(scores))
        weights = torch.softmax(scores, dim=-1) * has_key[:, None, None].to(scores.dtype)
        projected = self.w_v(mem_values.flatten(0, 1)).reshape(b, k_count, c, h, w)
        return (weights[:, 0, :, None, None, None] * projected).sum(dim=1)

    def forward_memory(
        self,
        sent_pooled: torch.Tensor,  # (d_txt,) single sample
        memory: VisualMemory,
        resolution: int,
        out_shape: tuple[int, int, int],
    ) -> torch.Tensor:
        """Single-sample convenience wrapper over a VisualMemory snapshot."""
        if len(memory) == 0:
            return sent_pooled.new_zeros(*out_shape)
        for e in memory.entries:
            if resolution not in e.feats:
                raise KeyError(f"memory entry lacks features at resolution {resolution}")
        keys = torch.stack([e.sent_pooled for e in memory.entries])[None]
        values = torch.stack([e.feats[resolution] for e in memory.entries])[None]
        mask = torch.ones(1, len(memory), dtype=torch.bool, device=keys.device)
        return self.forward(sent_pooled[None], keys, values, mask, out_shape)[0]


def fuse_attention(
    cross_out: torch.Tensor, memory_out: torch.Tensor, frame_feats: torch.Tensor
) -> torch.Tensor:
    """Additive combination residual-added to the frame features."""
    if cross_out.shape != memory_out.shape or cross_out.shape != frame_feats.shape:
        raise ValueError("attention outputs and frame features must share a shape")
    return frame_feats + cross_out + memory_out
