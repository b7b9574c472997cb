"""PNG round-trip helpers for float image arrays in [0, 1]."""

from __future__ import annotations

import io

import numpy as np
from PIL import Image


def array_to_png_bytes(frame: np.ndarray) -> bytes:
    """Encode an (H, W, 3) float array in [0, 1] as PNG bytes.

    Encoding is deterministic: identical arrays give identical bytes.
    """
    if frame.ndim != 3 or frame.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) array, got shape {frame.shape}")
    quantized = np.clip(np.rint(frame * 255.0), 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(quantized, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def png_bytes_to_array(data: bytes) -> np.ndarray:
    """Decode PNG bytes into an (H, W, 3) float32 array in [0, 1]."""
    img = Image.open(io.BytesIO(data)).convert("RGB")
    return np.asarray(img, dtype=np.float32) / 255.0


def save_png(frame: np.ndarray, path) -> None:
    with open(path, "wb") as fh:
        fh.write(array_to_png_bytes(frame))


def load_png(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return png_bytes_to_array(fh.read())
