"""ASCII PGM (P2) output for toy image samples"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from snrflow.errors import ShapeError

MAXVAL = 255


def to_gray_levels(image: np.ndarray, low: float = -1.0, high: float = 1.0) -> np.ndarray:
    """Map values in [low, high] to integer gray levels, clipping outside"""
    scaled = (np.clip(image, low, high) - low) / (high - low)
    return np.rint(scaled * MAXVAL).astype(np.int64)


def tile_grid(images: np.ndarray, columns: int | None = None, pad: int = 1, fill: float = -1.0) -> np.ndarray:
    """Lay out a [B, 1, H, W] or [B, H, W] batch on one canvas, row-major"""
    if images.ndim == 4:
        if images.shape[1] != 1:
            raise ShapeError(f"PGM grids need one channel, got {images.shape[1]}")
        images = images[:, 0]
    if images.ndim != 3 or images.shape[0] < 1:
        raise ShapeError(f"expected a non-empty image batch, got shape {images.shape}")
    count, height, width = images.shape
    columns = columns or math.ceil(math.sqrt(count))
    rows = math.ceil(count / columns)
    canvas = np.full(
        (rows * height + (rows + 1) * pad, columns * width + (columns + 1) * pad), fill, dtype=np.float64
    )
    for idx, img in enumerate(images):
        r, c = divmod(idx, columns)
        top = pad + r * (height + pad)
        left = pad + c * (width + pad)
        canvas[top : top + height, left : left + width] = img
    return canvas


def pgm_text(image: np.ndarray) -> str:
    """P2 encoding of one 2-D image with values in [-1, 1]"""
    if image.ndim != 2:
        raise ShapeError(f"expected a 2-D image, got shape {image.shape}")
    levels = to_gray_levels(image)
    lines = ["P2", f"{image.shape[1]} {image.shape[0]}", str(MAXVAL)]
    lines.extend(" ".join(str(v) for v in row) for row in levels)
    return "\n".join(lines) + "\n"


def write_pgm_grid(path: str | Path, images: np.ndarray, columns: int | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(pgm_text(tile_grid(images, columns)), encoding="ascii")
    return path
