"""Labeled image sets: synthetic generation and the flat DPFD binary format.

DPFD layout (little endian)::

    header  16 bytes: magic b"DPFD", version u32, count u32, C u8, H u8, W u8, pad u8
    record  label u16, then C*H*W float32 pixels in [0, 1]
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ConfigError, FormatError
from ..numerics import Rng, Stream

MAGIC = b"DPFD"
VERSION = 1
_HEADER = struct.Struct("<4sIIBBBx")


@dataclass
class LabeledImages:
    images: np.ndarray  # (n, C, H, W) float32
    labels: np.ndarray  # (n,) int64

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise FormatError("image and label counts differ")

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, index: np.ndarray) -> "LabeledImages":
        return LabeledImages(self.images[index], self.labels[index])


@dataclass(frozen=True)
class SyntheticSpec:
    """Per-class random Gaussian pixel patterns plus small Gaussian noise.

    Patterns are ``clip(0.5 + 0.25 * N(0, 1))`` per pixel, so two class
    patterns differ by roughly 0.3 per pixel; at ``noise_std <= 0.1`` the
    classes are linearly separable with overwhelming probability.
    """
    classes: int = 10
    train_per_class: int = 200
    test_per_class: int = 50
    image_size: int = 8
    channels: int = 1
    noise_std: float = 0.05
    pattern_seed: int = 0


def synthesize(spec: SyntheticSpec, seed: int) -> tuple[LabeledImages, LabeledImages]:
    """(train, test) sets. Patterns depend only on ``pattern_seed``; noise on ``seed``."""
    if spec.classes < 1 or spec.image_size < 1 or spec.channels < 1:
        raise ConfigError("synthetic spec needs positive class count and image extent")
    shape = (spec.channels, spec.image_size, spec.image_size)
    patterns = np.clip(0.5 + 0.25 * Rng(spec.pattern_seed, Stream.DATA).normal((spec.classes, *shape)), 0, 1)
    noise = Rng(seed, Stream.DATA)

    def draw(per_class: int) -> LabeledImages:
        labels = np.repeat(np.arange(spec.classes), per_class)
        x = patterns[labels] + spec.noise_std * noise.normal((len(labels), *shape))
        return LabeledImages(np.clip(x, 0, 1).astype(np.float32), labels.astype(np.int64))

    return draw(spec.train_per_class), draw(spec.test_per_class)


def _record_dtype(n_pixels: int) -> np.dtype:
    return np.dtype([("label", "<u2"), ("pixels", "<f4", (n_pixels,))])


def write_dpfd(data: LabeledImages, path: str | Path) -> None:
    n, c, h, w = data.images.shape
    if max(c, h, w) > 255:
        raise FormatError("DPFD stores C, H, W as single bytes")
    if len(data) and (data.labels.min() < 0 or data.labels.max() > 0xFFFF):
        raise FormatError("labels must fit in u16")
    rec = np.empty(n, dtype=_record_dtype(c * h * w))
    rec["label"] = data.labels
    rec["pixels"] = data.images.reshape(n, -1)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, n, c, h, w))
        fh.write(rec.tobytes())


def read_dpfd(path: str | Path) -> LabeledImages:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, n, c, h, w = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported DPFD version {version}")
    dtype = _record_dtype(c * h * w)
    expected = _HEADER.size + n * dtype.itemsize
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes for {n} records, found {len(raw)}")
    rec = np.frombuffer(raw, dtype=dtype, offset=_HEADER.size, count=n)
    images = rec["pixels"].astype(np.float32).reshape(n, c, h, w)
    return LabeledImages(images, rec["label"].astype(np.int64))
