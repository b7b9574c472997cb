"""Command line entry points for the full workflow: data generation,
codec/model/classifier training, sampling, evaluation, and serving."""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import torch

from .denoiser import UNet, UNetConfig
from .diffusion import make_schedule
from .evalsuite import (
    ClassifierTrainConfig,
    evaluate_run,
    load_classifier,
    save_classifier,
    train_classifier,
)
from .images import array_to_png_bytes
from .latentcodec import CodecConfig, load_codec, save_codec, train_codec
from .pipeline.checkpoint import CheckpointBundle, load_checkpoint, save_checkpoint
from .pipeline.data import (
    build_corpus_vocab,
    encode_latents,
    flat_frames,
    load_story_tensors,
)
from .pipeline.sampling import bundle_fingerprint, sample_story
from .pipeline.training import TrainConfig, Trainer
from .synthstory import FRAME_SIZE, generate_dataset, load_manifest, load_story
from .textenc import D_TXT, TextEncoder


def _cmd_gen_data(args) -> int:
    sizes = {"train": args.train, "val": args.val, "test": args.test}
    manifest = generate_dataset(args.out, sizes, seed=args.seed)
    total = sum(len(v) for v in manifest.stories.values())
    print(f"wrote {total} stories to {args.out}")
    return 0


def _cmd_train_codec(args) -> int:
    vocab = build_corpus_vocab(args.data)
    data = load_story_tensors(args.data, args.split, vocab, limit=args.limit)
    frames = flat_frames(data)
    config = CodecConfig(lr=args.lr, epochs=args.epochs, batch_size=args.batch_size)
    print(f"training codec on {frames.shape[0]} frames for {args.epochs} epochs")
    codec = train_codec(frames, config, seed=args.seed)
    save_codec(codec, args.out)
    print(f"saved codec to {args.out}")
    return 0


def _parse_mults(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(","))


def _cmd_train(args) -> int:
    codec = load_codec(args.codec)
    vocab = build_corpus_vocab(args.data)
    data = load_story_tensors(args.data, "train", vocab, limit=args.limit)
    latents = encode_latents(codec, data)

    torch.manual_seed(args.seed)
    unet_config = UNetConfig(
        in_channels=codec.config.latent_channels,
        latent_size=FRAME_SIZE // codec.config.downsample,
        base_channels=args.base_channels,
        channel_mults=_parse_mults(args.channel_mults),
        txt_dim=args.txt_dim,
        time_dim=args.txt_dim,
        max_t=args.timesteps,
        use_memory=not args.no_memory,
    )
    unet = UNet(unet_config)
    encoder = TextEncoder(vocab_size=len(vocab), dim=args.txt_dim)
    bundle = CheckpointBundle(
        codec=codec,
        text_encoder=encoder,
        unet=unet,
        vocab=vocab,
        schedule=make_schedule(args.timesteps),
    )
    config = TrainConfig(
        lr=args.lr,
        batch_size=args.batch_size,
        epochs=args.epochs,
        seed=args.seed,
        ema_decay=args.ema_decay,
        memory_mode="disabled" if args.no_memory else "teacher",
    )
    trainer = Trainer(bundle, latents, data.tokens, config, args.out)
    resume_path = Path(args.out) / "latest.pt"
    if args.resume and resume_path.exists():
        trainer.resume(resume_path)
        print(f"resumed from {resume_path} at epoch {trainer.start_epoch}")
    print(
        f"training on {latents.shape[0]} stories "
        f"({'memory disabled' if args.no_memory else 'memory enabled'})"
    )
    rows = trainer.train()
    if rows:
        print(f"final loss {rows[-1]['loss']:.4f} after {trainer.step} steps")
    print(f"checkpoint at {resume_path}")
    return 0


def _cmd_train_classifier(args) -> int:
    vocab = build_corpus_vocab(args.data)
    data = load_story_tensors(args.data, args.split, vocab, limit=args.limit)
    frames = flat_frames(data)
    labels = [pair for story in data.labels for pair in story]
    config = ClassifierTrainConfig(epochs=args.epochs)
    model = train_classifier(frames, labels, seed=args.seed, config=config)
    save_classifier(args.out, model)
    print(f"saved classifier to {args.out}")
    return 0


def _cmd_sample(args) -> int:
    if (args.text is None) == (args.story is None):
        print("provide exactly one of --text or --story", file=sys.stderr)
        return 2
    if args.text is not None:
        sentences = [s.strip() for s in args.text.split("|") if s.strip()]
    else:
        lines = Path(args.story).read_text().splitlines()
        sentences = [s.strip() for s in lines if s.strip()]
    bundle = load_checkpoint(args.ckpt)
    session = sample_story(sentences, bundle, seed=args.seed)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    for i, frame in enumerate(session.frames):
        png = array_to_png_bytes(frame)
        path = out / f"frame_{i}.png"
        path.write_bytes(png)
        records.append(
            {
                "index": i,
                "sentence": session.sentences[i],
                "path": path.name,
                "sha256": hashlib.sha256(png).hexdigest(),
            }
        )
    blob = {
        "seed": args.seed,
        "checkpoint": bundle_fingerprint(bundle),
        "frames": records,
    }
    (out / "session.json").write_text(json.dumps(blob, indent=2))
    print(f"wrote {len(records)} frames to {out}")
    return 0


def _cmd_eval(args) -> int:
    bundle = load_checkpoint(args.ckpt)
    classifier = load_classifier(args.classifier)
    manifest = load_manifest(args.data)
    rels = manifest.stories[args.split]
    if args.limit is not None:
        rels = rels[: args.limit]
    stories = [load_story(Path(args.data) / rel) for rel in rels]
    report = evaluate_run(bundle, stories, classifier, seed=args.seed)
    Path(args.out).write_text(report.to_json())
    print(report.to_json())
    return 0


def _cmd_serve(args) -> int:
    from .service import serve

    serve(args.ckpt, port=args.port, host=args.host, snapshot_dir=args.snapshot_dir)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="storygen")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="render a synthetic story corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--train", type=int, default=2000)
    p.add_argument("--val", type=int, default=200)
    p.add_argument("--test", type=int, default=200)
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train-codec", help="fit the image autoencoder")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="train")
    p.add_argument("--epochs", type=int, default=CodecConfig().epochs)
    p.add_argument("--lr", type=float, default=CodecConfig().lr)
    p.add_argument("--batch-size", type=int, default=CodecConfig().batch_size)
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_train_codec)

    p = sub.add_parser("train", help="train the story denoiser")
    p.add_argument("--data", required=True)
    p.add_argument("--codec", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=TrainConfig().epochs)
    p.add_argument("--batch-size", type=int, default=TrainConfig().batch_size)
    p.add_argument("--lr", type=float, default=TrainConfig().lr)
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--timesteps", type=int, default=200)
    p.add_argument("--base-channels", type=int, default=32)
    p.add_argument("--channel-mults", default="1,2,2")
    p.add_argument("--txt-dim", type=int, default=D_TXT)
    p.add_argument("--ema-decay", type=float, default=None)
    p.add_argument("--no-memory", action="store_true", help="ablation baseline")
    p.add_argument("--resume", action="store_true")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("train-classifier", help="fit the metric classifier")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="train")
    p.add_argument("--epochs", type=int, default=ClassifierTrainConfig().epochs)
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_train_classifier)

    p = sub.add_parser("sample", help="generate a story from a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--text", default=None, help="sentences separated by |")
    p.add_argument("--story", default=None, help="file with one sentence per line")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("eval", help="score a checkpoint on a dataset split")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--classifier", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("serve", help="run the branching story HTTP service")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--snapshot-dir", default=None)
    p.set_defaults(func=_cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
