"""Pilot-based channel estimation and scalar LMMSE equalization."""

from __future__ import annotations

import numpy as np

from ..config import LinkConfig


def ls_estimate(y, cfg: LinkConfig) -> np.ndarray:
    """Per-user effective channel from the comb pilots.

    ``y`` is the received grid [..., N_f, N_t, N_k]. At the subcarriers user
    k owns, h = y / p averaged over the pilot symbols; the other subcarriers
    are filled by linear interpolation in frequency (constant beyond the
    outermost pilots). Returns [..., N_f, N_k], valid for the whole slot.
    """
    y = np.asarray(y)
    spec = cfg.pilot
    if y.shape[-3:] != (cfg.n_f, cfg.n_t, cfg.n_k):
        raise ValueError(f"received grid {y.shape} does not match the link config")
    pil = y[..., list(spec.symbol_indices), :]                         # [..., N_f, P, N_k]
    raw = (pil / spec.sequence).mean(axis=-2)                          # [..., N_f, N_k]
    owned = spec.comb_mask()
    f = np.arange(cfg.n_f)
    lead = raw.shape[:-2]
    flat = raw.reshape((-1, cfg.n_f, cfg.n_k))
    out = np.empty_like(flat)
    for k in range(cfg.n_k):
        fk = f[owned[:, k]]
        if fk.size == 0:
            raise ValueError(f"user {k} owns no pilot subcarrier")
        vals = flat[:, owned[:, k], k]
        for i in range(flat.shape[0]):
            out[i, :, k] = np.interp(f, fk, vals[i].real) + 1j * np.interp(f, fk, vals[i].imag)
    return out.reshape(lead + (cfg.n_f, cfg.n_k))


def lmmse_equalize(y, h_eff, noise_var):
    """s_hat = conj(h) y / (|h|^2 + sigma^2).

    Returns (s_hat, gain, noise_eff): s_hat ~ gain * s + w with
    gain = |h|^2 / (|h|^2 + sigma^2) and var(w) = noise_eff for unit-energy s.
    """
    y = np.asarray(y)
    h = np.asarray(h_eff)
    nv = np.asarray(noise_var, dtype=float)
    p = np.abs(h) ** 2
    den = p + nv
    safe = np.where(den > 0, den, 1.0)
    s_hat = np.where(den > 0, np.conj(h) * y / safe, 0)
    gain = np.where(den > 0, p / safe, 0.0)
    return s_hat, gain, gain * (1 - gain)


def unbias(s_hat, gain, floor: float = 1e-12):
    """Scale LMMSE output to unit gain; returns (symbols, noise variance for the demapper)."""
    g = np.maximum(np.asarray(gain, dtype=float), floor)
    return s_hat / g, (1 - g) / g
