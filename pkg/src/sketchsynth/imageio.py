"""8-bit image loading and saving.

Inputs are grayscale or RGB PNG and PGM files; values map to float64 in
[0, 1].  Output is always 8-bit grayscale PNG, quantized by rounding half
up so that 0.5/255 boundaries land deterministically.
"""

from __future__ import annotations

import os

import numpy as np
from PIL import Image

_LOAD_MODES = {"L", "RGB"}


def load_image(path) -> np.ndarray:
    """Read a PNG or PGM file into float64 [0, 1].

    Returns (H, W) for grayscale and (H, W, 3) for RGB.  Palette images
    are expanded to RGB; anything else (16-bit, alpha) is rejected.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"image file not found: {path}")
    with Image.open(path) as img:
        if img.mode == "P":
            img = img.convert("RGB")
        if img.mode not in _LOAD_MODES:
            raise ValueError(
                f"unsupported image mode {img.mode!r} in {path}; expected 8-bit grayscale or RGB"
            )
        arr = np.asarray(img, dtype=np.float64)
    return arr / 255.0


def quantize(values: np.ndarray) -> np.ndarray:
    """[0, 1] floats to uint8 by round-half-up; values are clipped first."""
    scaled = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0) * 255.0
    return np.floor(scaled + 0.5).astype(np.uint8)


def save_image(path, values: np.ndarray) -> None:
    """Write a 2-D [0, 1] array as 8-bit grayscale PNG."""
    values = np.asarray(values)
    if values.ndim != 2:
        raise ValueError(f"expected a 2-D grayscale array, got shape {values.shape}")
    Image.fromarray(quantize(values), mode="L").save(path, format="PNG")
