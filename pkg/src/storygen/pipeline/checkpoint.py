"""Self-describing run checkpoints.

A checkpoint carries every config and weight needed to rebuild the
sampler: codec, text encoder, denoiser, schedule constants, and the
vocabulary.  Optional training state (optimizer, rng, EMA shadow)
makes runs resumable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import torch

from ..denoiser import UNet, UNetConfig
from ..diffusion import NoiseSchedule
from ..latentcodec import CodecConfig, LatentCodec
from ..textenc import TextEncoder, Vocabulary

CHECKPOINT_VERSION = 1


@dataclass
class CheckpointBundle:
    codec: LatentCodec
    text_encoder: TextEncoder
    unet: UNet
    vocab: Vocabulary
    schedule: NoiseSchedule
    step: int = 0
    train_state: dict = field(default_factory=dict)
    version: int = CHECKPOINT_VERSION

    def eval(self) -> "CheckpointBundle":
        self.codec.eval()
        self.text_encoder.eval()
        self.unet.eval()
        return self


def save_checkpoint(path: str | Path, bundle: CheckpointBundle) -> None:
    te = bundle.text_encoder
    blob = {
        "version": bundle.version,
        "step": bundle.step,
        "codec_config": bundle.codec.config.to_dict(),
        "codec_state": bundle.codec.state_dict(),
        "textenc_config": {
            "vocab_size": te.vocab_size,
            "dim": te.dim,
            "n_layers": len(te.blocks),
            "l_max": te.pos.shape[0],
        },
        "textenc_state": te.state_dict(),
        "unet_config": bundle.unet.config.to_dict(),
        "unet_state": bundle.unet.state_dict(),
        "vocab": list(bundle.vocab.id_to_token),
        "schedule": bundle.schedule.to_dict(),
        "train_state": bundle.train_state,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save(blob, tmp)
    tmp.replace(path)


def load_checkpoint(path: str | Path, prefer_ema: bool = False) -> CheckpointBundle:
    blob = torch.load(path, map_location="cpu", weights_only=False)
    if blob.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {blob.get('version')!r}")
    codec = LatentCodec(CodecConfig.from_dict(blob["codec_config"]))
    codec.load_state_dict(blob["codec_state"])
    te = TextEncoder(**blob["textenc_config"])
    te.load_state_dict(blob["textenc_state"])
    unet = UNet(UNetConfig.from_dict(blob["unet_config"]))
    unet.load_state_dict(blob["unet_state"])
    if prefer_ema and blob["train_state"].get("ema"):
        unet.load_state_dict(blob["train_state"]["ema"])
    bundle = CheckpointBundle(
        codec=codec,
        text_encoder=te,
        unet=unet,
        vocab=Vocabulary(tuple(blob["vocab"])),
        schedule=NoiseSchedule.from_dict(blob["schedule"]),
        step=blob["step"],
        train_state=blob["train_state"],
    )
    return bundle.eval()
