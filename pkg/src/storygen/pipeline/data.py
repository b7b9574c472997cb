"""Disk corpus -> tensors for training and evaluation."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from ..latentcodec import LatentCodec
from ..synthstory import load_manifest, load_story
from ..textenc import L_MAX, Vocabulary, build_vocab, tokenize


@dataclass
class StoryTensors:
    frames: torch.Tensor  # (N, M, 3, H, W) float32 in [0, 1]
    tokens: torch.Tensor  # (N, M, L) long
    sentences: list[list[str]]
    labels: list[list[tuple[tuple[str, ...], str]]]

    def __len__(self) -> int:
        return self.frames.shape[0]


def iter_split_sentences(root: str | Path, split: str):
    manifest = load_manifest(root)
    for rel in manifest.stories[split]:
        story = load_story(Path(root) / rel)
        yield from story.sentences


def build_corpus_vocab(root: str | Path, split: str = "train") -> Vocabulary:
    return build_vocab(iter_split_sentences(root, split))


def load_story_tensors(
    root: str | Path, split: str, vocab: Vocabulary, limit: int | None = None
) -> StoryTensors:
    manifest = load_manifest(root)
    rels = manifest.stories[split]
    if limit is not None:
        rels = rels[:limit]
    frames, tokens, sentences, labels = [], [], [], []
    for rel in rels:
        story = load_story(Path(root) / rel)
        frames.append(torch.from_numpy(story.frames).permute(0, 3, 1, 2))
        tokens.append(
            torch.tensor([tokenize(s, vocab, L_MAX) for s in story.sentences])
        )
        sentences.append(list(story.sentences))
        labels.append(list(story.labels))
    return StoryTensors(
        frames=torch.stack(frames),
        tokens=torch.stack(tokens),
        sentences=sentences,
        labels=labels,
    )


def flat_frames(data: StoryTensors) -> torch.Tensor:
    n, m = data.frames.shape[:2]
    return data.frames.reshape(n * m, *data.frames.shape[2:])


@torch.no_grad()
def encode_latents(codec: LatentCodec, data: StoryTensors, batch: int = 256) -> torch.Tensor:
    """Frozen-codec latents for every frame, shape (N, M, c, h, w)."""
    flat = flat_frames(data)
    outs = [codec.encode(flat[i : i + batch]) for i in range(0, flat.shape[0], batch)]
    z = torch.cat(outs)
    n, m = data.frames.shape[:2]
    return z.reshape(n, m, *z.shape[1:])
