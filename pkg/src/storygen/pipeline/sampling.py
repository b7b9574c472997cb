"""Autoregressive story sampling with immutable sessions.

Each frame runs the full reverse diffusion loop on a fresh Gaussian
latent, conditioned on its sentence (cross-attention) and on the
memory of previously generated frames.  Sessions are value objects:
extending returns a new session, so holding an old reference forks
the timeline with a byte-identical prefix.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import torch

from ..attention import VisualMemory
from ..diffusion import NoiseSchedule, p_sample_step
from ..textenc import tokenize
from .checkpoint import CheckpointBundle


def reverse_latent(
    predict_fn: Callable[[torch.Tensor, int], torch.Tensor],
    z_init: torch.Tensor,
    schedule: NoiseSchedule,
    rng: torch.Generator,
) -> torch.Tensor:
    """Full T..1 ancestral loop; predict_fn(z_t, t) returns eps."""
    z = z_init
    for t in range(schedule.T, 0, -1):
        z = p_sample_step(z, t, predict_fn(z, t), schedule, rng)
    return z


@dataclass(frozen=True)
class StorySession:
    fingerprint: str
    sentences: tuple[str, ...]
    latents: tuple[torch.Tensor, ...]
    frames: tuple[np.ndarray, ...]  # (H, W, 3) float32 each
    memory: VisualMemory
    rng_state: torch.Tensor

    def __len__(self) -> int:
        return len(self.frames)


def bundle_fingerprint(bundle: CheckpointBundle) -> str:
    return f"v{bundle.version}-step{bundle.step}-vocab{len(bundle.vocab)}"


def new_session(bundle: CheckpointBundle, seed: int) -> StorySession:
    gen = torch.Generator()
    gen.manual_seed(seed)
    return StorySession(
        fingerprint=bundle_fingerprint(bundle),
        sentences=(),
        latents=(),
        frames=(),
        memory=VisualMemory(),
        rng_state=gen.get_state(),
    )


@torch.no_grad()
def extend_story(
    session: StorySession, sentence: str, bundle: CheckpointBundle
) -> StorySession:
    """Generate exactly one frame; the input session is left untouched."""
    if session.fingerprint != bundle_fingerprint(bundle):
        raise ValueError("session was created with a different checkpoint")
    if not sentence.strip():
        raise ValueError("empty sentence")
    bundle.eval()
    unet, codec, te = bundle.unet, bundle.codec, bundle.text_encoder
    cfg = unet.config

    gen = torch.Generator()
    gen.set_state(session.rng_state)

    ids = torch.tensor(tokenize(sentence, bundle.vocab))
    enc = te.encode_sentence(ids)

    m = len(session)
    m_idx = torch.tensor([m])
    memory = session.memory

    z = torch.randn(
        1, cfg.in_channels, cfg.latent_size, cfg.latent_size, generator=gen
    )

    def predict(z_t: torch.Tensor, t: int) -> torch.Tensor:
        return unet(
            z_t,
            torch.tensor([t]),
            m_idx,
            enc.token_matrix[None],
            enc.mask[None],
            enc.pooled[None],
            [memory],
        )

    z0 = reverse_latent(predict, z, bundle.schedule, gen)
    frame = codec.decode(z0[0]).clamp(0.0, 1.0)
    entry = unet.build_memory_entry(z0[0], enc.pooled, frame_index=m)

    return StorySession(
        fingerprint=session.fingerprint,
        sentences=session.sentences + (sentence,),
        latents=session.latents + (z0[0],),
        frames=session.frames + (frame.permute(1, 2, 0).numpy(),),
        memory=memory.append(entry),
        rng_state=gen.get_state(),
    )


def sample_story(
    sentences: Sequence[str], bundle: CheckpointBundle, seed: int
) -> StorySession:
    """Generate one frame per sentence; equals repeated extend_story."""
    if len(sentences) < 1:
        raise ValueError("need at least one sentence")
    session = new_session(bundle, seed)
    for s in sentences:
        session = extend_story(session, s, bundle)
    return session
