"""Builds and caches the trained artifacts the acceptance suite scores.

Everything lands under .cache/acceptance (override with STORYGEN_ACCEPT_CACHE)
and is reused across runs. A cold rebuild takes a few hours on one CPU core;
ancestral sampling during the three evaluation passes dominates, not training.

STORYGEN_ACCEPT_BUDGET selects the experiment size: "full" trains on 2000
stories and demands a 10-point ablation gap, "reduced" (default) trains on
500 stories and demands 5 points.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import torch

from storygen.denoiser import UNet, UNetConfig
from storygen.diffusion import make_schedule
from storygen.evalsuite import (
    evaluate_run,
    load_classifier,
    save_classifier,
    train_classifier,
)
from storygen.latentcodec import load_codec, save_codec, train_codec
from storygen.pipeline.checkpoint import CheckpointBundle, load_checkpoint, save_checkpoint
from storygen.pipeline.data import (
    build_corpus_vocab,
    encode_latents,
    flat_frames,
    load_story_tensors,
)
from storygen.pipeline.training import TrainConfig, Trainer
from storygen.synthstory import FRAME_SIZE, generate_dataset, load_manifest, load_story
from storygen.textenc import TextEncoder

CACHE = Path(
    os.environ.get(
        "STORYGEN_ACCEPT_CACHE", Path(__file__).resolve().parent.parent / ".cache" / "acceptance"
    )
)
BUDGETS = {
    "full": {"train": 2000, "gap": 10.0, "epochs": 400},
    "reduced": {"train": 500, "gap": 5.0, "epochs": 1000},
}
BUDGET_NAME = os.environ.get("STORYGEN_ACCEPT_BUDGET", "reduced")

DATA_SEED = 7
TRAIN_SEED = 0
EVAL_SEED = 0
N_VAL = 50
N_TEST = 200


def _unet_config(codec, use_memory: bool) -> UNetConfig:
    return UNetConfig(
        in_channels=codec.config.latent_channels,
        latent_size=FRAME_SIZE // codec.config.downsample,
        base_channels=32,
        channel_mults=(1, 2, 2),
        txt_dim=128,
        time_dim=128,
        max_t=200,
        use_memory=use_memory,
    )


def _log(msg: str) -> None:
    print(f"[artifacts] {msg}", flush=True)


def ensure_dataset() -> Path:
    budget = BUDGETS[BUDGET_NAME]
    data = CACHE / "data"
    if not (data / "manifest.json").exists():
        _log(f"rendering corpus ({budget['train']} train stories)")
        generate_dataset(
            data,
            {"train": budget["train"], "val": N_VAL, "test": N_TEST},
            seed=DATA_SEED,
        )
    return data


def ensure_codec(data: Path):
    path = CACHE / "codec.pt"
    if not path.exists():
        _log("training codec")
        vocab = build_corpus_vocab(data)
        frames = flat_frames(load_story_tensors(data, "train", vocab))
        codec = train_codec(frames, seed=TRAIN_SEED)
        save_codec(codec, path)
    return load_codec(path)


def ensure_classifier(data: Path):
    path = CACHE / "clf.pt"
    if not path.exists():
        _log("training metric classifier")
        vocab = build_corpus_vocab(data)
        tensors = load_story_tensors(data, "train", vocab)
        labels = [pair for story in tensors.labels for pair in story]
        model = train_classifier(flat_frames(tensors), labels, seed=TRAIN_SEED)
        save_classifier(path, model)
    return load_classifier(path)


def ensure_run(data: Path, codec, use_memory: bool) -> Path:
    budget = BUDGETS[BUDGET_NAME]
    name = "memory" if use_memory else "baseline"
    run_dir = CACHE / "runs" / name
    final = run_dir / "latest.pt"
    init = run_dir / "init.pt"
    done = run_dir / "done.json"
    if done.exists() and json.loads(done.read_text())["epochs"] >= budget["epochs"]:
        return run_dir
    _log(f"training {name} model ({budget['epochs']} epochs)")
    vocab = build_corpus_vocab(data)
    tensors = load_story_tensors(data, "train", vocab)
    latents = encode_latents(codec, tensors)

    # same seed -> identical init streams, so the two runs share budgets
    torch.manual_seed(TRAIN_SEED)
    unet = UNet(_unet_config(codec, use_memory))
    encoder = TextEncoder(vocab_size=len(vocab), dim=128)
    bundle = CheckpointBundle(
        codec=codec,
        text_encoder=encoder,
        unet=unet,
        vocab=vocab,
        schedule=make_schedule(200),
    )
    run_dir.mkdir(parents=True, exist_ok=True)
    if not init.exists():
        save_checkpoint(init, bundle)
    config = TrainConfig(
        lr=1e-3,
        batch_size=16,
        epochs=budget["epochs"],
        seed=TRAIN_SEED,
        ema_decay=0.999,
        logs_per_epoch=1,
        memory_mode="teacher" if use_memory else "disabled",
    )
    trainer = Trainer(bundle, latents, tensors.tokens, config, run_dir)
    if final.exists():
        trainer.resume(final)  # continue a partial run bit-identically
    trainer.train()
    done.write_text(json.dumps({"epochs": budget["epochs"]}))
    return run_dir


def ensure_report(data: Path, classifier, ckpt: Path, out_name: str, ema: bool) -> dict:
    path = CACHE / "reports" / f"{out_name}.json"
    if not path.exists():
        _log(f"evaluating {ckpt} on {N_TEST} test stories")
        path.parent.mkdir(parents=True, exist_ok=True)
        bundle = load_checkpoint(ckpt, prefer_ema=ema).eval()
        manifest = load_manifest(data)
        stories = [load_story(data / rel) for rel in manifest.stories["test"]]
        report = evaluate_run(bundle, stories, classifier, seed=EVAL_SEED)
        path.write_text(report.to_json())
    return json.loads(path.read_text())


def ensure_artifacts() -> dict:
    """Idempotent end-to-end build; returns paths and parsed reports."""
    CACHE.mkdir(parents=True, exist_ok=True)
    data = ensure_dataset()
    codec = ensure_codec(data)
    classifier = ensure_classifier(data)
    mem_dir = ensure_run(data, codec, use_memory=True)
    base_dir = ensure_run(data, codec, use_memory=False)
    reports = {
        "memory": ensure_report(data, classifier, mem_dir / "latest.pt", "memory", ema=True),
        "baseline": ensure_report(data, classifier, base_dir / "latest.pt", "baseline", ema=True),
        "init": ensure_report(data, classifier, mem_dir / "init.pt", "init", ema=False),
    }
    meta_path = CACHE / "meta.json"
    if not meta_path.exists():
        meta_path.write_text(
            json.dumps({"budget": BUDGET_NAME, **BUDGETS[BUDGET_NAME]}, indent=2)
        )
    return {
        "cache": CACHE,
        "data": data,
        "codec_path": CACHE / "codec.pt",
        "classifier_path": CACHE / "clf.pt",
        "runs": {"memory": mem_dir, "baseline": base_dir},
        "reports": reports,
        "meta": json.loads(meta_path.read_text()),
    }


if __name__ == "__main__":
    ensure_artifacts()
    _log("all artifacts ready")
