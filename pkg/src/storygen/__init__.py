"""Latent-diffusion story generation with a visual memory.

Renders a synthetic referenced-story corpus, trains a latent diffusion
model whose denoiser attends over previously generated frames, and serves
interactive branching story sessions over HTTP.
"""

from .attention import (
    EMPTY_MEMORY,
    MEMORY_CAPACITY,
    CrossAttention,
    MemoryAttention,
    MemoryEntry,
    VisualMemory,
    fuse_attention,
    scaled_dot_attention,
)
from .denoiser import ConditioningBundle, UNet, UNetConfig, count_params, predict_noise
from .diffusion import NoiseSchedule, make_schedule, p_sample_step, q_sample, training_loss
from .evalsuite import (
    EvalReport,
    FrameClassifier,
    compute_fid,
    evaluate_run,
    story_metrics,
    train_classifier,
)
from .latentcodec import CodecConfig, LatentCodec, load_codec, psnr, save_codec, train_codec
from .pipeline import (
    CheckpointBundle,
    StorySession,
    TrainConfig,
    Trainer,
    extend_story,
    load_checkpoint,
    new_session,
    sample_story,
    save_checkpoint,
)
from .service import create_app
from .synthstory import StoryConfig, StorySample, build_story, generate_dataset
from .textenc import TextEncoder, Vocabulary, build_vocab, tokenize

__version__ = "0.1.0"

__all__ = [
    "EMPTY_MEMORY",
    "MEMORY_CAPACITY",
    "CrossAttention",
    "MemoryAttention",
    "MemoryEntry",
    "VisualMemory",
    "fuse_attention",
    "scaled_dot_attention",
    "ConditioningBundle",
    "UNet",
    "UNetConfig",
    "count_params",
    "predict_noise",
    "NoiseSchedule",
    "make_schedule",
    "p_sample_step",
    "q_sample",
    "training_loss",
    "EvalReport",
    "FrameClassifier",
    "compute_fid",
    "evaluate_run",
    "story_metrics",
    "train_classifier",
    "CodecConfig",
    "LatentCodec",
    "load_codec",
    "psnr",
    "save_codec",
    "train_codec",
    "CheckpointBundle",
    "StorySession",
    "TrainConfig",
    "Trainer",
    "extend_story",
    "load_checkpoint",
    "new_session",
    "sample_story",
    "save_checkpoint",
    "create_app",
    "StoryConfig",
    "StorySample",
    "build_story",
    "generate_dataset",
    "TextEncoder",
    "Vocabulary",
    "build_vocab",
    "tokenize",
    "__version__",
]
