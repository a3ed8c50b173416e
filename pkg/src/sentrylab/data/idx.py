"""IDX (MNIST) binary files.

Layout, all integers big-endian::

    u8 0, u8 0, u8 type code (0x08 = unsigned byte), u8 ndim
    ndim x u32 dimension sizes
    raw data, row-major

Image tensors use magic 0x00000803 (ndim 3: count, rows, cols), label
vectors 0x00000801 (ndim 1: count).
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .dataset import Dataset

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


class IDXFormatError(ValueError):
    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = str(path)


def read_idx(path, expected_magic: int) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise IDXFormatError(path, "truncated header")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise IDXFormatError(path, f"bad magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise IDXFormatError(path, "truncated dimension block")
    dims = struct.unpack(">" + "I" * ndim, raw[4:header])
    size = int(np.prod(dims))
    if len(raw) - header < size:
        raise IDXFormatError(path, f"truncated data: expected {size} bytes, found {len(raw) - header}")
    if len(raw) - header > size:
        raise IDXFormatError(path, "trailing bytes after data")
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(dims).copy()


def write_idx(path, array: np.ndarray) -> Path:
    a = np.asarray(array, dtype=np.uint8)
    magic = 0x00000800 | a.ndim
    path = Path(path)
    path.write_bytes(struct.pack(">I", magic) + struct.pack(">" + "I" * a.ndim, *a.shape) + a.tobytes())
    return path


def load_idx(images_path, labels_path, n_classes: int = 10, domain="target", split="train") -> Dataset:
    """Images scaled to [0, 1] and flattened; labels checked against ``n_classes``."""
    images = read_idx(images_path, IMAGE_MAGIC)
    labels = read_idx(labels_path, LABEL_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise IDXFormatError(labels_path, f"count mismatch: {images.shape[0]} images, {labels.shape[0]} labels")
    if labels.size and labels.max() >= n_classes:
        raise IDXFormatError(labels_path, f"label {int(labels.max())} outside [0, {n_classes})")
    n, rows, cols = images.shape
    X = images.reshape(n, rows * cols).astype(np.float64) / 255.0
    return Dataset(X, labels.astype(np.int64), n_classes, domain, split, (rows, cols))


def save_idx(dataset: Dataset, images_path, labels_path):
    """Inverse of :func:`load_idx`; pixels are re-quantised to bytes."""
    if dataset.image_shape is None:
        raise ValueError("dataset has no image shape")
    imgs = np.rint(np.clip(dataset.X, 0, 1) * 255.0).astype(np.uint8)
    write_idx(images_path, imgs.reshape((len(dataset),) + tuple(dataset.image_shape)))
    write_idx(labels_path, dataset.labels_for("io"))
