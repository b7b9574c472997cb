"""Story sampling and on-disk corpus generation.

A story is four frames with one sentence each.  The first sentence names
every character and the background; the remaining three refer back to the
characters with pronouns only, one reference per sentence.
"""

from __future__ import annotations

import dataclasses
import json
import shutil
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..images import save_png
from .grammar import (
    GRAMMAR_VERSION,
    follow_sentence,
    inject_coreferences,
    opening_sentence,
)
from .render import render_frame
from .specs import (
    ACTIONS,
    BACKGROUNDS,
    CHARACTER_BY_NAME,
    CHARACTERS,
    FRAME_SIZE,
    GRID_CELLS,
    SceneState,
)

STORY_LENGTH = 4
REFERENCES_PER_STORY = STORY_LENGTH - 1

SPLIT_NAMES = ("train", "val", "test")


@dataclass(frozen=True)
class StoryConfig:
    characters: tuple[str, ...] = tuple(c.name for c in CHARACTERS)
    backgrounds: tuple[str, ...] = tuple(b.name for b in BACKGROUNDS)
    two_character_prob: float = 0.5

    def validate(self) -> None:
        if not self.characters:
            raise ValueError("config lists no characters")
        if not self.backgrounds:
            raise ValueError("config lists no backgrounds")
        for name in self.characters:
            if name not in CHARACTER_BY_NAME:
                raise ValueError(f"unknown character {name!r}")


@dataclass
class StorySample:
    story_id: str
    seed: int
    frames: np.ndarray  # (M, H, W, 3) float32 in [0, 1]
    sentences: list[str]
    resolved_sentences: list[str]
    labels: list[tuple[tuple[str, ...], str]]  # per frame: (sorted char names, background)

    @property
    def background(self) -> str:
        return self.labels[0][1]


def _sample_positions(rng: np.random.Generator, n: int) -> tuple[tuple[int, int], ...]:
    cells = rng.choice(GRID_CELLS * GRID_CELLS, size=n, replace=False)
    return tuple((int(c) % GRID_CELLS, int(c) // GRID_CELLS) for c in cells)


def _pick_subjects(rng: np.random.Generator, cast: list[str]) -> list[list[str]]:
    """Subject set for each sentence; sentence 1 always names the full cast."""
    subjects = [list(cast)]
    if len(cast) == 1:
        options: list[list[str]] = [list(cast)]
    else:
        pronouns = {CHARACTER_BY_NAME[n].pronoun for n in cast}
        if len(pronouns) < len(cast):
            # A lone pronoun could not be resolved, so only joint mentions.
            options = [list(cast)]
        else:
            options = [list(cast), [cast[0]], [cast[1]]]
    for _ in range(STORY_LENGTH - 1):
        subjects.append(list(options[rng.integers(len(options))]))
    return subjects


def build_story(rng: np.random.Generator, config: StoryConfig, story_id: str = "story", seed: int = 0) -> StorySample:
    """Sample one story; deterministic given the rng state."""
    config.validate()
    n_chars = 2 if (len(config.characters) > 1 and rng.random() < config.two_character_prob) else 1
    cast_idx = rng.choice(len(config.characters), size=n_chars, replace=False)
    cast = sorted(config.characters[int(i)] for i in cast_idx)
    background = config.backgrounds[int(rng.integers(len(config.backgrounds)))]

    subjects = _pick_subjects(rng, cast)
    verbs = [ACTIONS[int(rng.integers(len(ACTIONS)))] for _ in subjects]
    resolved: list[str] = []
    for m, subj in enumerate(subjects):
        if m == 0:
            resolved.append(opening_sentence(subj, verbs[m], background))
        else:
            resolved.append(follow_sentence(subj, verbs[m]))
    entities = {name: CHARACTER_BY_NAME[name].pronoun for name in cast}
    sentences = inject_coreferences(resolved, entities)

    frames = np.zeros((STORY_LENGTH, FRAME_SIZE, FRAME_SIZE, 3), dtype=np.float32)
    labels: list[tuple[tuple[str, ...], str]] = []
    for m, subj in enumerate(subjects):
        scene = SceneState(
            characters=tuple(sorted(subj)),
            background=background,
            positions=_sample_positions(rng, len(subj)),
            action=verbs[m][0],
        )
        frames[m] = render_frame(scene)
        labels.append((tuple(sorted(subj)), background))
    return StorySample(
        story_id=story_id,
        seed=seed,
        frames=frames,
        sentences=sentences,
        resolved_sentences=resolved,
        labels=labels,
    )


@dataclass
class DatasetManifest:
    grammar_version: str
    global_seed: int
    split_sizes: dict[str, int]
    characters: list[str]
    backgrounds: list[str]
    references_per_story: float
    stories: dict[str, list[str]] = field(default_factory=dict)  # split -> relative dirs

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "DatasetManifest":
        return DatasetManifest(**json.loads(text))


def _write_story(story: StorySample, story_dir: Path) -> None:
    story_dir.mkdir(parents=True, exist_ok=False)
    frame_files = []
    for m in range(story.frames.shape[0]):
        fname = f"frame_{m}.png"
        save_png(story.frames[m], story_dir / fname)
        frame_files.append(fname)
    record = {
        "story_id": story.story_id,
        "seed": story.seed,
        "sentences": story.sentences,
        "resolved_sentences": story.resolved_sentences,
        "labels": [
            {"characters": list(chars), "background": bg} for chars, bg in story.labels
        ],
        "frames": frame_files,
    }
    with open(story_dir / "story.jsonl", "w") as fh:
        fh.write(json.dumps(record, sort_keys=True) + "\n")


def generate_dataset(
    out_dir: str | Path,
    sizes: dict[str, int],
    seed: int,
    config: StoryConfig | None = None,
) -> DatasetManifest:
    """Write train/val/test splits under out_dir and return the manifest."""
    config = config or StoryConfig()
    config.validate()
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)

    manifest = DatasetManifest(
        grammar_version=GRAMMAR_VERSION,
        global_seed=seed,
        split_sizes={k: int(sizes.get(k, 0)) for k in SPLIT_NAMES},
        characters=[c.name for c in CHARACTERS],
        backgrounds=[b.name for b in BACKGROUNDS],
        references_per_story=float(REFERENCES_PER_STORY),
    )
    for split_idx, split in enumerate(SPLIT_NAMES):
        count = manifest.split_sizes[split]
        split_dir = root / split
        if split_dir.exists():
            shutil.rmtree(split_dir)
        try:
            dirs: list[str] = []
            for i in range(count):
                story_seed = int(
                    np.random.SeedSequence([seed, split_idx, i]).generate_state(1)[0]
                )
                rng = np.random.default_rng(story_seed)
                sid = f"story_{i:05d}"
                story = build_story(rng, config, story_id=sid, seed=story_seed)
                _write_story(story, split_dir / sid)
                dirs.append(f"{split}/{sid}")
            manifest.stories[split] = dirs
        except Exception:
            # Never leave a half-written split behind.
            if split_dir.exists():
                shutil.rmtree(split_dir)
            raise
    (root / "manifest.json").write_text(manifest.to_json())
    return manifest


def load_manifest(root: str | Path) -> DatasetManifest:
    return DatasetManifest.from_json((Path(root) / "manifest.json").read_text())


def load_story(story_dir: str | Path) -> StorySample:
    story_dir = Path(story_dir)
    with open(story_dir / "story.jsonl") as fh:
        record = json.loads(fh.readline())
    from ..images import load_png

    frames = np.stack([load_png(story_dir / f) for f in record["frames"]])
    labels = [
        (tuple(lab["characters"]), lab["background"]) for lab in record["labels"]
    ]
    return StorySample(
        story_id=record["story_id"],
        seed=record["seed"],
        frames=frames,
        sentences=record["sentences"],
        resolved_sentences=record["resolved_sentences"],
        labels=labels,
    )
