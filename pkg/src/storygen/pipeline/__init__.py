"""Training, checkpointing, and autoregressive story sampling."""

from .checkpoint import CHECKPOINT_VERSION, CheckpointBundle, load_checkpoint, save_checkpoint
from .data import (
    StoryTensors,
    build_corpus_vocab,
    encode_latents,
    flat_frames,
    iter_split_sentences,
    load_story_tensors,
)
from .sampling import (
    StorySession,
    bundle_fingerprint,
    extend_story,
    new_session,
    reverse_latent,
    sample_story,
)
from .training import MEMORY_MODES, TrainConfig, Trainer, train_step

__all__ = [
    "CHECKPOINT_VERSION",
    "CheckpointBundle",
    "load_checkpoint",
    "save_checkpoint",
    "StoryTensors",
    "build_corpus_vocab",
    "encode_latents",
    "flat_frames",
    "iter_split_sentences",
    "load_story_tensors",
    "StorySession",
    "bundle_fingerprint",
    "extend_story",
    "new_session",
    "reverse_latent",
    "sample_story",
    "MEMORY_MODES",
    "TrainConfig",
    "Trainer",
    "train_step",
]
