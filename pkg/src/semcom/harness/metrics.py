"""Reconstruction, classification and link metrics."""

from __future__ import annotations

import numpy as np

PSNR_CAP_DB = 100.0


def psnr(a, b, axis=None) -> np.ndarray | float:
    """10 log10(1 / MSE) for images in [0, 1]; zero MSE is capped at 100 dB.

    ``axis`` selects the axes averaged into one MSE (default: all).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    mse = np.mean((a - b) ** 2, axis=axis)
    with np.errstate(divide="ignore"):
        out = np.minimum(-10.0 * np.log10(mse), PSNR_CAP_DB)
    return float(out) if np.ndim(out) == 0 else out


def image_psnr(a, b) -> np.ndarray:
    """Per-image PSNR over the trailing (H, W, C) axes."""
    return psnr(a, b, axis=(-3, -2, -1))


def accuracy(logits, labels) -> float:
    """Argmax-match fraction; np.argmax resolves ties to the first index."""
    logits = np.asarray(logits)
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValueError("accuracy of an empty batch")
    pred = np.argmax(logits.reshape(-1, logits.shape[-1]), axis=-1)
    return float(np.mean(pred == labels.reshape(-1)))


def bler(block_ok) -> float:
    ok = np.asarray(block_ok, dtype=bool)
    if ok.size == 0:
        raise ValueError("bler of an empty block list")
    return float(np.mean(~ok))
