"""Image data: IDX (MNIST) files, block downsampling, and synthetic shapes."""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError, FormatError
from .rng import Rng

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

SHAPE_SIZE = 16
SHAPE_CLASSES = 3
SHAPE_NAMES = ("square", "circle", "plus")


@dataclass
class ImageSet:
    images: np.ndarray  # (n, width * height), values in [0, 1]
    labels: np.ndarray  # (n,) int
    width: int
    height: int

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64).reshape(len(self.labels), -1)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.shape[1] != self.width * self.height:
            raise ContractError(
                f"image width {self.images.shape[1]} != {self.width}x{self.height}")

    def __len__(self):
        return len(self.labels)

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1 if len(self.labels) else 0

    def of_class(self, c: int) -> np.ndarray:
        return self.images[self.labels == c]

    def take(self, per_class: int) -> "ImageSet":
        """First ``per_class`` images of every class, in original order."""
        keep = np.zeros(len(self), dtype=bool)
        for c in np.unique(self.labels):
            keep[np.flatnonzero(self.labels == c)[:per_class]] = True
        return ImageSet(self.images[keep], self.labels[keep], self.width, self.height)


# ---------------------------------------------------------------- IDX


def _read(path) -> bytes:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        return fh.read()


def parse_idx_images(buf: bytes) -> np.ndarray:
    """Raw uint8 array of shape (count, rows, cols)."""
    if len(buf) < 16:
        raise FormatError("truncated image header", len(buf))
    magic, count, rows, cols = struct.unpack_from(">IIII", buf, 0)
    if magic != IDX_IMAGES_MAGIC:
        raise FormatError(f"bad image magic 0x{magic:08x}", 0)
    need = 16 + count * rows * cols
    if len(buf) < need:
        raise FormatError(f"truncated image data: need {need} bytes, have {len(buf)}", len(buf))
    return np.frombuffer(buf, dtype=np.uint8, count=count * rows * cols, offset=16).reshape(count, rows, cols)


def parse_idx_labels(buf: bytes) -> np.ndarray:
    if len(buf) < 8:
        raise FormatError("truncated label header", len(buf))
    magic, count = struct.unpack_from(">II", buf, 0)
    if magic != IDX_LABELS_MAGIC:
        raise FormatError(f"bad label magic 0x{magic:08x}", 0)
    if len(buf) < 8 + count:
        raise FormatError(f"truncated label data: need {8 + count} bytes, have {len(buf)}", len(buf))
    return np.frombuffer(buf, dtype=np.uint8, count=count, offset=8)


def load_idx(images_path, labels_path) -> ImageSet:
    """Read an IDX image/label pair (optionally gzipped); pixels scaled to [0, 1]."""
    raw = parse_idx_images(_read(images_path))
    labels = parse_idx_labels(_read(labels_path))
    if len(labels) != len(raw):
        # count field of the label header
        raise FormatError(f"label count {len(labels)} != image count {len(raw)}", 4)
    n, rows, cols = raw.shape
    return ImageSet(raw.reshape(n, rows * cols) / 255.0, labels.astype(np.int64), cols, rows)


def idx_image_bytes(pixels: np.ndarray) -> bytes:
    """Serialize a uint8 (count, rows, cols) array as an IDX image file."""
    pixels = np.asarray(pixels, dtype=np.uint8)
    n, rows, cols = pixels.shape
    return struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols) + pixels.tobytes()


def idx_label_bytes(labels) -> bytes:
    labels = np.asarray(labels, dtype=np.uint8)
    return struct.pack(">II", IDX_LABELS_MAGIC, len(labels)) + labels.tobytes()


def downsample(images: ImageSet, k: int) -> ImageSet:
    """Non-overlapping k x k mean pooling."""
    if k <= 0 or images.width % k or images.height % k:
        raise ContractError(f"downsample factor {k} must divide {images.width}x{images.height}")
    n = len(images)
    h, w = images.height // k, images.width // k
    pooled = images.images.reshape(n, h, k, w, k).mean(axis=(2, 4))
    return ImageSet(pooled.reshape(n, h * w), images.labels.copy(), w, h)


# ---------------------------------------------------------------- synthetic shapes


def shape_template(cls: int, dy: int = 0, dx: int = 0) -> np.ndarray:
    """Noise-free 16x16 shape with its center shifted by (dy, dx)."""
    img = np.zeros((SHAPE_SIZE, SHAPE_SIZE))
    cy, cx = 8 + dy, 8 + dx
    if cls == 0:
        img[cy - 4:cy + 4, cx - 4:cx + 4] = 1.0
    elif cls == 1:
        r, c = np.mgrid[0:SHAPE_SIZE, 0:SHAPE_SIZE]
        dist = np.hypot(r - cy, c - cx)
        img[np.abs(dist - 5.0) < 1.0] = 1.0
    elif cls == 2:
        img[cy - 1:cy + 1, cx - 6:cx + 6] = 1.0
        img[cy - 6:cy + 6, cx - 1:cx + 1] = 1.0
    else:
        raise IndexError(f"shape class {cls} out of range [0, {SHAPE_CLASSES})")
    return img


def synth_shape(cls: int, rng: Rng) -> np.ndarray:
    """One noisy 16x16 shape: square, circle outline or plus sign.

    Draws the row jitter, the column jitter (each in {-1, 0, 1}), then 256
    noise values in [0, 0.1).
    """
    if not 0 <= cls < SHAPE_CLASSES:
        raise IndexError(f"shape class {cls} out of range [0, {SHAPE_CLASSES})")
    dy = rng.randbelow(3) - 1
    dx = rng.randbelow(3) - 1
    img = shape_template(cls, dy, dx) + 0.1 * rng.uniform((SHAPE_SIZE, SHAPE_SIZE))
    return np.clip(img, 0.0, 1.0)


def synth_shapes(per_class: int, rng: Rng) -> ImageSet:
    """``per_class`` images of each class, interleaved 0, 1, 2, 0, 1, 2, ..."""
    labels = np.tile(np.arange(SHAPE_CLASSES), per_class)
    images = np.stack([synth_shape(int(c), rng).reshape(-1) for c in labels]) if per_class else \
        np.zeros((0, SHAPE_SIZE * SHAPE_SIZE))
    return ImageSet(images, labels, SHAPE_SIZE, SHAPE_SIZE)
