"""Sentence tokenization and a small transformer encoder.

Sentences are lowercased and split on punctuation, wrapped in BOS/EOS,
and padded to a fixed length.  The encoder yields per-token features and
a pooled vector that ignores PAD positions.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from pathlib import Path

import torch
from torch import nn

PAD, UNK, BOS, EOS = "<pad>", "<unk>", "<bos>", "<eos>"
SPECIAL_TOKENS = (PAD, UNK, BOS, EOS)
PAD_ID, UNK_ID, BOS_ID, EOS_ID = 0, 1, 2, 3

L_MAX = 16
D_TXT = 128

_TOKEN_RE = re.compile(r"[a-z]+|[^a-z\s]")


def split_tokens(sentence: str) -> list[str]:
    return _TOKEN_RE.findall(sentence.lower())


@dataclass(frozen=True)
class Vocabulary:
    id_to_token: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(
            self, "token_to_id", {t: i for i, t in enumerate(self.id_to_token)}
        )

    def __len__(self) -> int:
        return len(self.id_to_token)

    def lookup(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    def to_json(self) -> str:
        return json.dumps({"tokens": list(self.id_to_token)})

    @staticmethod
    def from_json(text: str) -> "Vocabulary":
        return Vocabulary(tuple(json.loads(text)["tokens"]))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @staticmethod
    def load(path: str | Path) -> "Vocabulary":
        return Vocabulary.from_json(Path(path).read_text())


def build_vocab(corpus) -> Vocabulary:
    """Specials first, then all corpus tokens in sorted order."""
    seen: set[str] = set()
    empty = True
    for sentence in corpus:
        empty = False
        seen.update(split_tokens(sentence))
    if empty:
        raise ValueError("empty corpus")
    return Vocabulary(SPECIAL_TOKENS + tuple(sorted(seen)))


def tokenize(sentence: str, vocab: Vocabulary, length: int = L_MAX) -> list[int]:
    ids = [BOS_ID] + [vocab.lookup(t) for t in split_tokens(sentence)] + [EOS_ID]
    ids = ids[:length]
    return ids + [PAD_ID] * (length - len(ids))


def detokenize(ids, vocab: Vocabulary) -> str:
    words = [
        vocab.id_to_token[i]
        for i in ids
        if vocab.id_to_token[i] not in SPECIAL_TOKENS
    ]
    out = ""
    for w in words:
        if out and re.match(r"[a-z]", w):
            out += " "
        out += w
    return out


def sinusoidal_positions(length: int, dim: int) -> torch.Tensor:
    """Standard fixed sin/cos position table, shape (length, dim)."""
    pos = torch.arange(length, dtype=torch.float64)[:, None]
    idx = torch.arange(0, dim, 2, dtype=torch.float64)[None, :]
    angle = pos / torch.pow(10000.0, idx / dim)
    table = torch.zeros(length, dim, dtype=torch.float64)
    table[:, 0::2] = torch.sin(angle)
    table[:, 1::2] = torch.cos(angle)
    return table


class SelfAttentionBlock(nn.Module):
    """Pre-norm single-head self-attention + feed-forward, PAD keys masked."""

    def __init__(self, dim: int, ffn_mult: int = 4):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.q = nn.Linear(dim, dim, bias=False)
        self.k = nn.Linear(dim, dim, bias=False)
        self.v = nn.Linear(dim, dim, bias=False)
        self.proj = nn.Linear(dim, dim, bias=False)
        self.norm2 = nn.LayerNorm(dim)
        self.ffn = nn.Sequential(
            nn.Linear(dim, ffn_mult * dim), nn.SiLU(), nn.Linear(ffn_mult * dim, dim)
        )

    def forward(self, x: torch.Tensor, key_mask: torch.Tensor) -> torch.Tensor:
        h = self.norm1(x)
        q, k, v = self.q(h), self.k(h), self.v(h)
        scores = q @ k.transpose(-2, -1) / math.sqrt(x.shape[-1])
        has_key = key_mask.any(dim=-1)  # (B,)
        scores = scores.masked_fill(~key_mask[:, None, :], float("-inf"))
        # A batch row with no usable keys gets a zero attention update.
        scores = torch.where(
            has_key[:, None, None], scores, torch.zeros_like(scores)
        )
        attn = torch.softmax(scores, dim=-1) * has_key[:, None, None]
        x = x + self.proj(attn @ v)
        return x + self.ffn(self.norm2(x))


@dataclass
class SentenceEncoding:
    token_matrix: torch.Tensor  # (L, d) or (B, L, d)
    pooled: torch.Tensor  # (d,) or (B, d)
    mask: torch.Tensor  # (L,) or (B, L) bool, True at non-PAD


class TextEncoder(nn.Module):
    def __init__(self, vocab_size: int, dim: int = D_TXT, n_layers: int = 2, l_max: int = L_MAX):
        super().__init__()
        self.vocab_size = vocab_size
        self.dim = dim
        self.embed = nn.Embedding(vocab_size, dim)
        self.register_buffer("pos", sinusoidal_positions(l_max, dim).to(torch.float32))
        self.blocks = nn.ModuleList(SelfAttentionBlock(dim) for _ in range(n_layers))

    def forward(self, tokens: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        if tokens.min() < 0 or tokens.max() >= self.vocab_size:
            raise ValueError("token id out of vocabulary range")
        mask = tokens != PAD_ID
        x = self.embed(tokens) + self.pos[: tokens.shape[-1]].to(self.embed.weight.dtype)
        for block in self.blocks:
            x = block(x, mask)
        denom = mask.sum(dim=-1, keepdim=True).clamp(min=1)
        pooled = (x * mask[..., None]).sum(dim=-2) / denom
        # All-PAD sentences pool over every position instead.
        pooled = torch.where(mask.any(dim=-1, keepdim=True), pooled, x.mean(dim=-2))
        return x, pooled

    @torch.no_grad()
    def encode_sentence(self, tokens: torch.Tensor) -> SentenceEncoding:
        squeeze = tokens.dim() == 1
        if squeeze:
            tokens = tokens[None]
        matrix, pooled = self.forward(tokens)
        mask = tokens != PAD_ID
        if squeeze:
            return SentenceEncoding(matrix[0], pooled[0], mask[0])
        return SentenceEncoding(matrix, pooled, mask)
