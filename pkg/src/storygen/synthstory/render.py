"""Deterministic rasterization of scenes into 32x32 RGB frames."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .specs import (
    BACKGROUND_BY_NAME,
    CELL_SIZE,
    CHARACTER_BY_NAME,
    FRAME_SIZE,
    GRID_MARGIN,
    BackgroundSpec,
    CharacterSpec,
    SceneState,
)

SPRITE_SIZE = CELL_SIZE


@lru_cache(maxsize=None)
def background_texture(name: str) -> np.ndarray:
    """Fixed (H, W, 3) texture for a background, derived from its seed."""
    spec: BackgroundSpec = BACKGROUND_BY_NAME[name]
    rng = np.random.default_rng(spec.texture_seed)
    base = np.asarray(spec.base_color, dtype=np.float64)
    speckle = rng.uniform(-0.05, 0.05, size=(FRAME_SIZE, FRAME_SIZE, 1))
    # Low-frequency band gives each background a recognizable stripe pattern.
    freq = rng.uniform(0.4, 1.2)
    phase = rng.uniform(0, 2 * np.pi)
    rows = np.arange(FRAME_SIZE, dtype=np.float64)
    band = 0.04 * np.sin(freq * rows + phase)[:, None, None]
    tex = base[None, None, :] + speckle + band
    tex = np.clip(tex, 0.0, 1.0)
    tex.flags.writeable = False
    return tex


@lru_cache(maxsize=None)
def sprite_mask(shape: str) -> np.ndarray:
    """Boolean (SPRITE_SIZE, SPRITE_SIZE) silhouette for a sprite shape."""
    size = SPRITE_SIZE
    yy, xx = np.mgrid[0:size, 0:size]
    if shape == "square":
        mask = (yy >= 1) & (yy <= size - 2) & (xx >= 1) & (xx <= size - 2)
    elif shape == "circle":
        c = (size - 1) / 2.0
        mask = (yy - c) ** 2 + (xx - c) ** 2 <= (size / 2.0 - 0.8) ** 2
    elif shape == "triangle":
        # Upward-pointing triangle spanning the cell.
        c = (size - 1) / 2.0
        mask = (yy >= 1) & (np.abs(xx - c) <= (yy - 1) * 0.55 + 0.3) & (yy <= size - 2)
    else:
        raise ValueError(f"unknown sprite shape {shape!r}")
    mask.flags.writeable = False
    return mask


def draw_sprite(frame: np.ndarray, character: CharacterSpec, cell: tuple[int, int]) -> None:
    col, row = cell
    x0 = GRID_MARGIN + CELL_SIZE * col
    y0 = GRID_MARGIN + CELL_SIZE * row
    mask = sprite_mask(character.shape)
    patch = frame[y0 : y0 + SPRITE_SIZE, x0 : x0 + SPRITE_SIZE]
    patch[mask] = np.asarray(character.color, dtype=frame.dtype)


def render_frame(scene: SceneState) -> np.ndarray:
    """Render a validated scene to a float32 (H, W, 3) frame in [0, 1]."""
    scene.validate()
    frame = background_texture(scene.background).astype(np.float32).copy()
    for name, cell in zip(scene.characters, scene.positions):
        draw_sprite(frame, CHARACTER_BY_NAME[name], cell)
    return frame
