"""Metrics for generated stories: per-frame classification and Fréchet distance.

A small convnet trained on ground-truth rendered frames provides both the
character/background predictions and the penultimate features used for the
Fréchet distance, so all reported numbers are internally comparable.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .synthstory import BACKGROUNDS, CHARACTERS
from .pipeline.checkpoint import CheckpointBundle
from .pipeline.sampling import sample_story

CHAR_NAMES = tuple(c.name for c in CHARACTERS)
BG_NAMES = tuple(b.name for b in BACKGROUNDS)
FEATURE_DIM = 8

METRIC_CHOICES = {
    "char_accuracy": "exact character-set match per frame",
    "char_f1_averaging": "micro over per-character binary predictions",
    "bg_f1_averaging": "macro over all background classes",
    "sigmoid_threshold": 0.5,
}


def frames_to_tensor(frames: np.ndarray) -> torch.Tensor:
    """(N, H, W, 3) float array in [0, 1] to a (N, 3, H, W) tensor."""
    arr = np.asarray(frames, dtype=np.float32)
    if arr.ndim != 4 or arr.shape[-1] != 3:
        raise ValueError(f"expected (N, H, W, 3) frames, got {arr.shape}")
    return torch.from_numpy(arr).permute(0, 3, 1, 2).contiguous()


def encode_labels(labels) -> tuple[torch.Tensor, torch.Tensor]:
    """Label pairs (names, background) to multi-hot chars and bg indices."""
    char_idx = {n: i for i, n in enumerate(CHAR_NAMES)}
    bg_idx = {n: i for i, n in enumerate(BG_NAMES)}
    chars = torch.zeros(len(labels), len(CHAR_NAMES))
    bgs = torch.zeros(len(labels), dtype=torch.long)
    for i, (names, bg) in enumerate(labels):
        for n in names:
            chars[i, char_idx[n]] = 1.0
        bgs[i] = bg_idx[bg]
    return chars, bgs


class FrameClassifier(nn.Module):
    """Convnet trunk with a multi-label character head and a background head.

    Global max pooling makes sprite detection translation invariant; the
    average pool carries the background texture statistics.
    """

    def __init__(self, feature_dim: int = FEATURE_DIM):
        super().__init__()
        self.feature_dim = feature_dim
        self.convs = nn.Sequential(
            nn.Conv2d(3, 24, 3, padding=1),
            nn.SiLU(),
            nn.Conv2d(24, 48, 3, stride=2, padding=1),
            nn.SiLU(),
            nn.Conv2d(48, 96, 3, stride=2, padding=1),
            nn.SiLU(),
        )
        self.fc = nn.Sequential(nn.Linear(192, feature_dim), nn.SiLU())
        self.char_head = nn.Linear(feature_dim, len(CHAR_NAMES))
        self.bg_head = nn.Linear(feature_dim, len(BG_NAMES))
        # set after training to 1/std so Fréchet inputs have unit scale
        self.register_buffer("feature_scale", torch.ones(()))

    def features(self, x: torch.Tensor) -> torch.Tensor:
        h = self.convs(x)
        pooled = torch.cat([h.amax(dim=(2, 3)), h.mean(dim=(2, 3))], dim=1)
        return self.fc(pooled) * self.feature_scale

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        h = self.convs(x)
        pooled = torch.cat([h.amax(dim=(2, 3)), h.mean(dim=(2, 3))], dim=1)
        h = self.fc(pooled)
        return self.char_head(h), self.bg_head(h)


@dataclass(frozen=True)
class ClassifierTrainConfig:
    lr: float = 3e-3
    epochs: int = 30
    batch_size: int = 64
    char_loss_weight: float = 2.0
    holdout_frac: float = 0.1
    min_accuracy: float = 0.98
    feature_dim: int = FEATURE_DIM


def train_classifier(
    frames: torch.Tensor,  # (N, 3, H, W) ground-truth renders
    labels,  # N pairs of (character names, background name)
    seed: int,
    config: ClassifierTrainConfig = ClassifierTrainConfig(),
) -> FrameClassifier:
    """Fit the metric classifier; refuses to return a weak one."""
    if frames.shape[0] != len(labels):
        raise ValueError("one label pair per frame required")
    torch.manual_seed(seed)
    model = FrameClassifier(feature_dim=config.feature_dim)
    chars, bgs = encode_labels(labels)

    gen = torch.Generator().manual_seed(seed)
    order = torch.randperm(frames.shape[0], generator=gen)
    n_hold = max(1, int(round(frames.shape[0] * config.holdout_frac)))
    hold, fit = order[:n_hold], order[n_hold:]

    opt = torch.optim.Adam(model.parameters(), lr=config.lr)
    bce = nn.BCEWithLogitsLoss()
    ce = nn.CrossEntropyLoss()
    steps_per_epoch = max(1, -(-len(fit) // config.batch_size))
    total_steps = config.epochs * steps_per_epoch
    step = 0
    for _ in range(config.epochs):
        perm = fit[torch.randperm(len(fit), generator=gen)]
        for start in range(0, len(perm), config.batch_size):
            # cosine decay to zero sharpens the decision boundary enough to
            # separate low-contrast sprite/background pairs reliably
            for group in opt.param_groups:
                group["lr"] = config.lr * 0.5 * (1 + math.cos(math.pi * step / total_steps))
            sel = perm[start : start + config.batch_size]
            c_logit, b_logit = model(frames[sel])
            loss = config.char_loss_weight * bce(c_logit, chars[sel]) + ce(
                b_logit, bgs[sel]
            )
            opt.zero_grad()
            loss.backward()
            opt.step()
            step += 1

    model.eval()
    with torch.no_grad():
        std = model.features(frames[fit]).std().item()
    if std > 0:
        model.feature_scale.fill_(1.0 / std)
    pred_c, pred_b = classify_frames(model, frames[hold])
    char_acc = (pred_c == chars[hold].bool()).all(dim=1).double().mean().item()
    bg_acc = (pred_b == bgs[hold]).double().mean().item()
    if char_acc < config.min_accuracy or bg_acc < config.min_accuracy:
        raise RuntimeError(
            f"classifier too weak for metrics: char_acc={char_acc:.3f}, "
            f"bg_acc={bg_acc:.3f}, need {config.min_accuracy}"
        )
    return model


@torch.no_grad()
def classify_frames(
    model: FrameClassifier, frames: torch.Tensor, batch_size: int = 256
) -> tuple[torch.Tensor, torch.Tensor]:
    """Thresholded character sets and top-1 backgrounds."""
    model.eval()
    chars, bgs = [], []
    for start in range(0, frames.shape[0], batch_size):
        c_logit, b_logit = model(frames[start : start + batch_size])
        chars.append(torch.sigmoid(c_logit) > METRIC_CHOICES["sigmoid_threshold"])
        bgs.append(b_logit.argmax(dim=1))
    return torch.cat(chars), torch.cat(bgs)


@torch.no_grad()
def extract_features(
    model: FrameClassifier, frames: torch.Tensor, batch_size: int = 256
) -> np.ndarray:
    model.eval()
    out = [
        model.features(frames[s : s + batch_size])
        for s in range(0, frames.shape[0], batch_size)
    ]
    return torch.cat(out).double().numpy()


@dataclass(frozen=True)
class Metrics:
    char_acc: float
    char_f1: float
    bg_acc: float
    bg_f1: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _binary_f1(tp: int, fp: int, fn: int) -> float:
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def set_metrics(
    pred_chars: torch.Tensor,  # (N, 3) bool
    gt_chars: torch.Tensor,  # (N, 3) bool
    pred_bgs: torch.Tensor,  # (N,) long
    gt_bgs: torch.Tensor,  # (N,) long
) -> Metrics:
    """Pure metric arithmetic on already-classified frames."""
    if not (len(pred_chars) == len(gt_chars) == len(pred_bgs) == len(gt_bgs)):
        raise ValueError("prediction/label lengths differ")
    if len(pred_chars) == 0:
        raise ValueError("no frames to score")
    p_c, g_c = pred_chars.bool(), gt_chars.bool()
    char_acc = (p_c == g_c).all(dim=1).double().mean().item()
    tp = int((p_c & g_c).sum())
    fp = int((p_c & ~g_c).sum())
    fn = int((~p_c & g_c).sum())
    char_f1 = _binary_f1(tp, fp, fn)

    bg_acc = (pred_bgs == gt_bgs).double().mean().item()
    per_class = []
    for c in range(len(BG_NAMES)):
        tp_c = int(((pred_bgs == c) & (gt_bgs == c)).sum())
        fp_c = int(((pred_bgs == c) & (gt_bgs != c)).sum())
        fn_c = int(((pred_bgs != c) & (gt_bgs == c)).sum())
        per_class.append(_binary_f1(tp_c, fp_c, fn_c))
    return Metrics(char_acc, char_f1, bg_acc, float(np.mean(per_class)))


def story_metrics(
    frames: torch.Tensor, labels, model: FrameClassifier
) -> Metrics:
    """Classify generated frames and score them against ground-truth labels."""
    if frames.shape[0] != len(labels):
        raise ValueError("one label pair per frame required")
    pred_c, pred_b = classify_frames(model, frames)
    gt_c, gt_b = encode_labels(labels)
    return set_metrics(pred_c, gt_c.bool(), pred_b, gt_b)


def psd_sqrt(mat: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root; negative round-off eigenvalues clamped."""
    sym = (mat + mat.T) / 2.0
    vals, vecs = np.linalg.eigh(sym)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def compute_fid(real_feats: np.ndarray, gen_feats: np.ndarray) -> float:
    """Fréchet distance between Gaussian fits of two feature sets."""
    real = np.asarray(real_feats, dtype=np.float64)
    gen = np.asarray(gen_feats, dtype=np.float64)
    if real.ndim != 2 or gen.ndim != 2 or real.shape[1] != gen.shape[1]:
        raise ValueError("features must be 2-d with a shared dimension")
    if real.shape[0] < 2 or gen.shape[0] < 2:
        raise ValueError("need at least 2 samples per side")
    d = real.shape[1]
    if real.shape[0] <= d or gen.shape[0] <= d:
        warnings.warn(
            f"fewer samples than feature dims ({real.shape[0]}, {gen.shape[0]} "
            f"vs {d}); covariance estimate is rank-deficient",
            stacklevel=2,
        )
    mu_r, mu_g = real.mean(axis=0), gen.mean(axis=0)
    cov_r = np.cov(real, rowvar=False)
    cov_g = np.cov(gen, rowvar=False)

    # trace of (cov_r cov_g)^{1/2} via the similar symmetric PSD product
    root_r = psd_sqrt(cov_r)
    inner = root_r @ cov_g @ root_r
    vals = np.clip(np.linalg.eigvalsh((inner + inner.T) / 2.0), 0.0, None)
    diff = mu_r - mu_g
    fid = float(
        diff @ diff + np.trace(cov_r) + np.trace(cov_g) - 2.0 * np.sqrt(vals).sum()
    )
    return max(fid, 0.0)


@dataclass(frozen=True)
class EvalReport:
    overall: Metrics
    first_frame: Metrics
    referenced: Metrics  # frames with index >= 1, i.e. pronoun-referenced
    fid: float
    n_stories: int
    n_frames: int
    n_first: int
    n_referenced: int
    choices: dict = field(default_factory=lambda: dict(METRIC_CHOICES))

    def validate(self) -> None:
        for m in (self.overall, self.first_frame, self.referenced):
            for v in m.as_dict().values():
                if not 0.0 <= v <= 1.0:
                    raise ValueError(f"metric out of range: {v}")
        if self.fid < 0:
            raise ValueError("fid must be non-negative")
        if self.n_first + self.n_referenced != self.n_frames:
            raise ValueError("frame breakdown does not aggregate to the total")

    def to_json(self) -> str:
        blob = {
            "overall": self.overall.as_dict(),
            "first_frame": self.first_frame.as_dict(),
            "referenced": self.referenced.as_dict(),
            "fid": self.fid,
            "counts": {
                "stories": self.n_stories,
                "frames": self.n_frames,
                "first": self.n_first,
                "referenced": self.n_referenced,
            },
            "choices": self.choices,
        }
        return json.dumps(blob, indent=2, sort_keys=True)


def evaluate_run(
    bundle: CheckpointBundle,
    stories,  # StorySample sequence: sentences, frames, labels
    classifier: FrameClassifier,
    seed: int,
) -> EvalReport:
    """Sample one story per test item with fixed per-item seeds and score."""
    real_frames, gen_frames, labels, m_index = [], [], [], []
    for i, story in enumerate(stories):
        item_seed = int(np.random.SeedSequence([seed, i]).generate_state(1)[0])
        session = sample_story(list(story.sentences), bundle, item_seed)
        for m, frame in enumerate(session.frames):
            gen_frames.append(frame)
            real_frames.append(story.frames[m])
            labels.append(story.labels[m])
            m_index.append(m)

    gen = frames_to_tensor(np.stack(gen_frames))
    real = frames_to_tensor(np.stack(real_frames))
    pred_c, pred_b = classify_frames(classifier, gen)
    gt_c, gt_b = encode_labels(labels)
    gt_c = gt_c.bool()

    is_first = torch.tensor([m == 0 for m in m_index])
    overall = set_metrics(pred_c, gt_c, pred_b, gt_b)
    first = set_metrics(pred_c[is_first], gt_c[is_first], pred_b[is_first], gt_b[is_first])
    ref = set_metrics(pred_c[~is_first], gt_c[~is_first], pred_b[~is_first], gt_b[~is_first])
    fid = compute_fid(
        extract_features(classifier, real), extract_features(classifier, gen)
    )
    report = EvalReport(
        overall=overall,
        first_frame=first,
        referenced=ref,
        fid=fid,
        n_stories=len(stories),
        n_frames=len(labels),
        n_first=int(is_first.sum()),
        n_referenced=int((~is_first).sum()),
    )
    report.validate()
    return report


def save_classifier(path: str | Path, model: FrameClassifier) -> None:
    torch.save(
        {"feature_dim": model.feature_dim, "state": model.state_dict()}, path
    )


def load_classifier(path: str | Path) -> FrameClassifier:
    blob = torch.load(path, map_location="cpu", weights_only=True)
    model = FrameClassifier(feature_dim=blob["feature_dim"])
    model.load_state_dict(blob["state"])
    return model.eval()
