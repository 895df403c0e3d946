"""Image datasets: the CIFAR-10 binary layout and a synthetic stand-in."""

from __future__ import annotations

import os
from typing import NamedTuple

import numpy as np

RECORD_BYTES = 3073
PIXEL_BYTES = 3072
CIFAR_TRAIN_FILES = tuple(f"data_batch_{i}.bin" for i in range(1, 6))
CIFAR_TEST_FILES = ("test_batch.bin",)


class IngestionError(ValueError):
    pass


class ImageSet(NamedTuple):
    images: np.ndarray   # float32 [n, 32, 32, 3] in [0, 1]
    labels: np.ndarray   # int64 [n]

    def __len__(self):
        return len(self.labels)

    def subset(self, idx) -> "ImageSet":
        return ImageSet(self.images[idx], self.labels[idx])


def parse_cifar_records(raw: bytes, source: str = "<bytes>") -> ImageSet:
    """Decode 3073-byte records: one label byte then channel-planar 32x32 R, G, B."""
    if len(raw) == 0 or len(raw) % RECORD_BYTES:
        n = len(raw) // RECORD_BYTES
        raise IngestionError(
            f"{source}: length {len(raw)} is not a whole number of {RECORD_BYTES}-byte records "
            f"(expected {(n + 1) * RECORD_BYTES} for {n + 1} records; damage begins at byte offset "
            f"{n * RECORD_BYTES})")
    rec = np.frombuffer(raw, dtype=np.uint8).reshape(-1, RECORD_BYTES)
    labels = rec[:, 0].astype(np.int64)
    bad = np.flatnonzero(labels > 9)
    if bad.size:
        i = int(bad[0])
        raise IngestionError(f"{source}: label {labels[i]} out of range at byte offset {i * RECORD_BYTES}")
    images = rec[:, 1:].reshape(-1, 3, 32, 32).transpose(0, 2, 3, 1).astype(np.float32) / 255.0
    return ImageSet(images, labels)


def load_cifar10(path, split: str = "train") -> ImageSet:
    """Load a CIFAR-10 batch file, or the ``split`` files ("train", "test", "all") of a directory."""
    path = os.fspath(path)
    if os.path.isfile(path):
        files = [path]
    elif os.path.isdir(path):
        names = {"train": CIFAR_TRAIN_FILES, "test": CIFAR_TEST_FILES,
                 "all": CIFAR_TRAIN_FILES + CIFAR_TEST_FILES}.get(split)
        if names is None:
            raise ValueError(f"split must be train, test or all, got {split!r}")
        files = [os.path.join(path, n) for n in names]
        missing = [f for f in files if not os.path.isfile(f)]
        if missing:
            raise IngestionError(f"missing CIFAR-10 files: {missing}")
    else:
        raise IngestionError(f"no such CIFAR-10 file or directory: {path}")
    parts = []
    for f in files:
        with open(f, "rb") as fh:
            parts.append(parse_cifar_records(fh.read(), f))
    return ImageSet(np.concatenate([p.images for p in parts]), np.concatenate([p.labels for p in parts]))


# synthetic data ---------------------------------------------------------------------------

def _pattern(label: int, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.mgrid[0:32, 0:32] / 31.0
    c0, c1 = rng.uniform(0.05, 0.95, size=(2, 3))
    if label < 3:        # linear gradients: horizontal, vertical, diagonal
        t = (xx, yy, (xx + yy) / 2)[label]
        t = t if rng.random() < 0.5 else 1 - t
    elif label < 6:      # checkerboards with 2, 4 and 8 pixel cells
        cell = (2, 4, 8)[label - 3]
        ox, oy = rng.integers(0, cell, size=2)
        t = (((np.arange(32)[:, None] + oy) // cell + (np.arange(32)[None, :] + ox) // cell) % 2).astype(float)
    else:                # a Gaussian blob in one of four quadrants
        q = label - 6
        cy, cx = 0.25 + 0.5 * (q // 2), 0.25 + 0.5 * (q % 2)
        cy, cx = cy + rng.normal(0, 0.04), cx + rng.normal(0, 0.04)
        width = rng.uniform(0.08, 0.16)
        t = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * width ** 2))
    img = c0 + (c1 - c0) * t[..., None]
    img = img + rng.normal(0, 0.02, size=img.shape)
    return np.clip(img, 0.0, 1.0)


def synth_dataset(seed: int, n: int) -> ImageSet:
    """Deterministic 32x32 RGB images in ten pattern classes with balanced labels."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.arange(n) % 10)
    images = np.stack([_pattern(int(c), rng) for c in labels]).astype(np.float32)
    return ImageSet(images, labels.astype(np.int64))


def load_dataset(spec: str, n: int, split: str = "train") -> ImageSet:
    """``"synth"`` or ``"cifar:<dir>"``; returns the first ``n`` images of the split."""
    if spec == "synth":
        # fixed, disjoint seeds for the two splits
        return synth_dataset(0 if split == "train" else 1, n)
    if spec.startswith("cifar:"):
        data = load_cifar10(spec[len("cifar:"):], split)
        if n > len(data):
            raise ValueError(f"requested {n} images, dataset has {len(data)}")
        return data.subset(slice(0, n))
    raise ValueError(f"unknown dataset spec {spec!r}; use 'synth' or 'cifar:<dir>'")
