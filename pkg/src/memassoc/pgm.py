"""Binary greyscale PGM (P5) output for recall grids."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import FormatError


def quantize(img: np.ndarray) -> np.ndarray:
    """[0, 1] floats to bytes, rounding half up; out-of-range values are clamped."""
    return np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def encode_pgm(img: np.ndarray) -> bytes:
    img = np.asarray(img)
    if img.ndim != 2:
        raise ValueError(f"PGM needs a 2-d image, got shape {img.shape}")
    data = img if img.dtype == np.uint8 else quantize(img)
    h, w = data.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + data.tobytes()


def write_pgm(path, img: np.ndarray) -> None:
    Path(path).write_bytes(encode_pgm(img))


def read_pgm(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    fields, pos = [], 0
    while len(fields) < 4:
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(buf) and not buf[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated PGM header", pos)
        fields.append(buf[start:pos])
    if fields[0] != b"P5":
        raise FormatError(f"not a binary PGM: {fields[0]!r}", 0)
    w, h, maxval = (int(f) for f in fields[1:])
    if maxval != 255:
        raise FormatError(f"unsupported maxval {maxval}", pos)
    pos += 1
    if len(buf) - pos != w * h:
        raise FormatError(f"expected {w * h} pixel bytes, found {len(buf) - pos}", pos)
    return np.frombuffer(buf, dtype=np.uint8, offset=pos).reshape(h, w)


def recall_grid(samples: list[np.ndarray], width: int, height: int) -> np.ndarray:
    """Tile per-class samples into columns (one per class) with 1-pixel black gutters.

    ``samples[c]`` holds the n flattened images for class ``c``.
    """
    cols = len(samples)
    rows = max((len(s) for s in samples), default=0)
    grid = np.zeros((rows * height + max(rows - 1, 0), cols * width + max(cols - 1, 0)))
    for c, block in enumerate(samples):
        for r, img in enumerate(block):
            y, x = r * (height + 1), c * (width + 1)
            grid[y:y + height, x:x + width] = np.asarray(img).reshape(height, width)
    return grid
