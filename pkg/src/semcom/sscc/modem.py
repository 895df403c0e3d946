"""Gray-mapped square QAM with max-log soft demapping.

Each axis carries a Gray-coded PAM: for 4QAM one bit per axis,
level = 1 - 2b; for 16QAM (sign bit s, amplitude bit a),
level = (1 - 2s)(1 + 2a), giving -3, -1, 1, 3 for (1,1), (1,0), (0,0), (0,1).
Bits are ordered (I bits, Q bits). Unit average energy.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

_NORM = {2: np.sqrt(2.0), 4: np.sqrt(10.0)}


def _axis_levels(bits: np.ndarray, m: int) -> np.ndarray:
    if m == 2:
        return 1.0 - 2.0 * bits[..., 0]
    return (1.0 - 2.0 * bits[..., 0]) * (1.0 + 2.0 * bits[..., 1])


def qam_map(bits, m: int) -> np.ndarray:
    """bits [..., n] with n divisible by m -> complex symbols [..., n / m]."""
    if m not in _NORM:
        raise ValueError(f"modulation order must be 2 or 4 bits per symbol, got {m}")
    bits = np.asarray(bits)
    if bits.shape[-1] % m:
        raise ValueError(f"{bits.shape[-1]} bits is not a multiple of m={m}")
    g = bits.reshape(bits.shape[:-1] + (-1, 2, m // 2)).astype(float)
    return (_axis_levels(g[..., 0, :], m) + 1j * _axis_levels(g[..., 1, :], m)) / _NORM[m]


@lru_cache(maxsize=4)
def constellation(m: int) -> tuple[np.ndarray, np.ndarray]:
    """All 2^m points and their bit labels [2^m, m]."""
    labels = ((np.arange(2 ** m)[:, None] >> np.arange(m - 1, -1, -1)[None, :]) & 1).astype(np.uint8)
    return qam_map(labels, m).reshape(-1), labels


def qam_demap_llr(y_eq, noise_var, m: int) -> np.ndarray:
    """Max-log LLRs log P(b=0)/P(b=1) for equalized symbols [..., n] -> [..., n * m].

    ``noise_var`` is the per-symbol effective noise variance and broadcasts
    against ``y_eq``.
    """
    y = np.asarray(y_eq)
    points, labels = constellation(m)
    nv = np.maximum(np.asarray(noise_var, dtype=float), 1e-300)
    d = np.abs(y[..., None] - points) ** 2                           # [..., n, 2^m]
    llr = np.empty(y.shape + (m,))
    for i in range(m):
        one = labels[:, i] == 1
        llr[..., i] = (d[..., one].min(axis=-1) - d[..., ~one].min(axis=-1))
    llr /= np.asarray(nv)[..., None]
    return llr.reshape(y.shape[:-1] + (-1,))
