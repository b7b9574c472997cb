"""Teacher-forced diffusion training over story frames.

Every step draws one (frame index, timestep) pair per story, builds the
visual memory from ground-truth latents of earlier frames, and fits the
noise prediction with MSE.  Runs are deterministic given the seed and
resumable from the per-epoch checkpoints.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import torch

from ..attention import VisualMemory
from ..diffusion import q_sample, training_loss
from .checkpoint import CheckpointBundle, load_checkpoint, save_checkpoint
from .sampling import reverse_latent

MEMORY_MODES = ("teacher", "generated", "disabled")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 2e-4
    batch_size: int = 16
    epochs: int = 8
    seed: int = 0
    grad_clip: float = 1.0
    ema_decay: float | None = None
    logs_per_epoch: int = 2
    memory_mode: str = "teacher"

    def validate(self) -> None:
        if self.lr <= 0 or self.batch_size <= 0 or self.epochs <= 0:
            raise ValueError("hyperparameters must be positive")
        if self.logs_per_epoch < 1:
            raise ValueError("logs_per_epoch must be >= 1")
        if self.memory_mode not in MEMORY_MODES:
            raise ValueError(f"memory_mode must be one of {MEMORY_MODES}")


def _build_teacher_memories(
    unet, latents: torch.Tensor, pooled: torch.Tensor, m: torch.Tensor
) -> list[VisualMemory]:
    """Ground-truth memories: entries for frames < m_i per story."""
    pairs = [(i, j) for i, mi in enumerate(m.tolist()) for j in range(mi)]
    memories = [VisualMemory() for _ in range(latents.shape[0])]
    if not pairs:
        return memories
    z = torch.stack([latents[i, j] for i, j in pairs])
    p = torch.stack([pooled[i, j] for i, j in pairs])
    entries = unet.build_memory_entries(z, p, [j for _, j in pairs])
    grouped: dict[int, list] = {}
    for (i, _), e in zip(pairs, entries):
        grouped.setdefault(i, []).append(e)
    return [
        VisualMemory(tuple(grouped.get(i, ()))) for i in range(latents.shape[0])
    ]


def _build_generated_memories(
    unet, schedule, tok_mat, tok_mask, pooled, m: torch.Tensor, gen: torch.Generator
) -> list[VisualMemory]:
    """Memories from model-generated latents for frames < m_i (no grad)."""
    memories = []
    c, s = unet.config.in_channels, unet.config.latent_size
    with torch.no_grad():
        for i, mi in enumerate(m.tolist()):
            mem = VisualMemory()
            for j in range(mi):
                def predict(z_t, t, _j=j, _i=i, _mem=mem):
                    return unet(
                        z_t,
                        torch.tensor([t]),
                        torch.tensor([_j]),
                        tok_mat[_i, _j][None],
                        tok_mask[_i, _j][None],
                        pooled[_i, _j][None],
                        [_mem],
                    )

                z_init = torch.randn(1, c, s, s, generator=gen)
                z0 = reverse_latent(predict, z_init, schedule, gen)
                mem = mem.append(unet.build_memory_entry(z0[0], pooled[i, j], j))
            memories.append(mem)
    return memories


def train_step(
    unet,
    text_encoder,
    optimizer,
    latents: torch.Tensor,  # (B, M, c, h, w)
    tokens: torch.Tensor,  # (B, M, L)
    schedule,
    gen: torch.Generator,
    config: TrainConfig,
) -> float:
    """One optimizer update; returns the scalar loss."""
    b, n_frames = tokens.shape[:2]
    m = torch.randint(0, n_frames, (b,), generator=gen)
    t = torch.randint(1, schedule.T + 1, (b,), generator=gen)

    flat = tokens.reshape(b * n_frames, -1)
    tok_mat_f, pooled_f = text_encoder(flat)
    tok_mat = tok_mat_f.reshape(b, n_frames, *tok_mat_f.shape[1:])
    pooled = pooled_f.reshape(b, n_frames, -1)
    tok_mask = (tokens != 0).reshape(b, n_frames, -1)

    if config.memory_mode == "teacher":
        memories = _build_teacher_memories(unet, latents, pooled, m)
    elif config.memory_mode == "generated":
        memories = _build_generated_memories(
            unet, schedule, tok_mat, tok_mask, pooled, m, gen
        )
    else:
        memories = [VisualMemory() for _ in range(b)]

    idx = torch.arange(b)
    z0 = latents[idx, m]
    eps = torch.randn(z0.shape, generator=gen, dtype=z0.dtype)
    z_t = q_sample(z0, t, eps, schedule)

    eps_pred = unet(
        z_t, t, m, tok_mat[idx, m], tok_mask[idx, m], pooled[idx, m], memories
    )
    loss = training_loss(eps, eps_pred)
    if not torch.isfinite(loss):
        raise RuntimeError(f"training loss is not finite ({loss.item()})")

    optimizer.zero_grad()
    loss.backward()
    if config.grad_clip:
        torch.nn.utils.clip_grad_norm_(
            [p for g in optimizer.param_groups for p in g["params"]], config.grad_clip
        )
    optimizer.step()
    return loss.item()


class Trainer:
    """Epoch loop with logging, checkpointing, and resume."""

    def __init__(
        self,
        bundle: CheckpointBundle,
        latents: torch.Tensor,
        tokens: torch.Tensor,
        config: TrainConfig,
        out_dir: str | Path,
    ):
        config.validate()
        self.bundle = bundle
        self.latents = latents
        self.tokens = tokens
        self.config = config
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        params = list(bundle.unet.parameters()) + list(bundle.text_encoder.parameters())
        self.optimizer = torch.optim.Adam(params, lr=config.lr)
        self.gen = torch.Generator()
        self.gen.manual_seed(config.seed)
        self.start_epoch = 0
        self.step = 0
        self.log_rows: list[dict] = []
        self.ema: dict[str, torch.Tensor] | None = None
        if config.ema_decay is not None:
            self.ema = {
                n: p.detach().clone() for n, p in bundle.unet.named_parameters()
            }

    def _update_ema(self) -> None:
        if self.ema is None:
            return
        d = self.config.ema_decay
        with torch.no_grad():
            for n, p in self.bundle.unet.named_parameters():
                self.ema[n].mul_(d).add_(p.detach(), alpha=1 - d)

    def _save(self, path: Path) -> None:
        self.bundle.step = self.step
        self.bundle.train_state = {
            "optimizer": self.optimizer.state_dict(),
            "rng": self.gen.get_state(),
            "epoch_done": self.start_epoch,
            "log_rows": list(self.log_rows),
            "config": self.config.__dict__,
            "ema": self.ema,
        }
        save_checkpoint(path, self.bundle)

    def resume(self, path: str | Path) -> None:
        loaded = load_checkpoint(path)
        self.bundle = loaded
        params = list(loaded.unet.parameters()) + list(loaded.text_encoder.parameters())
        self.optimizer = torch.optim.Adam(params, lr=self.config.lr)
        state = loaded.train_state
        self.optimizer.load_state_dict(state["optimizer"])
        self.gen.set_state(state["rng"])
        self.start_epoch = state["epoch_done"]
        self.log_rows = list(state["log_rows"])
        self.step = loaded.step
        self.ema = state.get("ema")

    def _write_csv(self) -> None:
        if not self.log_rows:
            return
        keys: list[str] = []
        for row in self.log_rows:
            for k in row:
                if k not in keys:
                    keys.append(k)
        with open(self.out_dir / "runlog.csv", "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=keys)
            writer.writeheader()
            writer.writerows(self.log_rows)

    def train(self, eval_fn=None) -> list[dict]:
        cfg = self.config
        n = self.latents.shape[0]
        steps_per_epoch = max(1, math.ceil(n / cfg.batch_size))
        log_marks = {
            max(0, round((k + 1) * steps_per_epoch / cfg.logs_per_epoch) - 1)
            for k in range(cfg.logs_per_epoch)
        }
        self.bundle.unet.train()
        self.bundle.text_encoder.train()
        last_good = None
        for epoch in range(self.start_epoch, cfg.epochs):
            order = torch.randperm(n, generator=self.gen)
            recent: list[float] = []
            for bi, start in enumerate(range(0, n, cfg.batch_size)):
                sel = order[start : start + cfg.batch_size]
                try:
                    loss = train_step(
                        self.bundle.unet,
                        self.bundle.text_encoder,
                        self.optimizer,
                        self.latents[sel],
                        self.tokens[sel],
                        self.bundle.schedule,
                        self.gen,
                        cfg,
                    )
                except RuntimeError as err:
                    raise RuntimeError(
                        f"{err}; last good checkpoint: {last_good}"
                    ) from err
                self._update_ema()
                self.step += 1
                recent.append(loss)
                if bi in log_marks:
                    row = {
                        "epoch": epoch,
                        "step": self.step,
                        "loss": sum(recent) / len(recent),
                    }
                    recent = []
                    if eval_fn is not None and bi == max(log_marks):
                        row.update(eval_fn(self.bundle, epoch))
                    self.log_rows.append(row)
            self.start_epoch = epoch + 1
            path = self.out_dir / "latest.pt"
            self._save(path)
            last_good = path
            self._write_csv()
        self.bundle.eval()
        return self.log_rows
