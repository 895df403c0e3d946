"""Tapped-delay-line MU-MIMO channels in the frequency domain.

The scenario presets are coarse stand-ins for the three outdoor deployments
(urban micro, urban macro, rural macro). They only aim to keep the ordering
of those environments: strong LOS and short delay spread for UMa, no LOS and
the longest delay spread for RMa.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ScenarioProfile:
    name: str
    delays: tuple          # seconds, increasing, first tap at 0
    powers: tuple          # linear, sum to 1
    rician_k: float        # linear K-factor of tap 0 (0 -> Rayleigh)
    pathloss_spread_db: float

    def __post_init__(self):
        d = np.asarray(self.delays, dtype=float)
        p = np.asarray(self.powers, dtype=float)
        if d.ndim != 1 or d.shape != p.shape or d.size == 0:
            raise ValueError("delays and powers must be equal-length 1-D sequences")
        if np.any(d < 0) or np.any(np.diff(d) <= 0):
            raise ValueError(f"tap delays must be nonnegative and increasing: {self.delays}")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError(f"tap powers must be nonnegative and sum to 1, got sum {p.sum()}")
        if self.rician_k < 0 or self.pathloss_spread_db < 0:
            raise ValueError("rician_k and pathloss_spread_db must be nonnegative")

    @property
    def rms_delay_spread(self) -> float:
        d = np.asarray(self.delays)
        p = np.asarray(self.powers)
        mean = (p * d).sum()
        return float(np.sqrt((p * d ** 2).sum() - mean ** 2))

    @classmethod
    def from_dict(cls, d: dict, name: str | None = None) -> "ScenarioProfile":
        return cls(name=d.get("name", name or "custom"),
                   delays=tuple(float(t) * 1e-6 for t in d["taps_us"]),
                   powers=tuple(float(p) for p in d["powers"]),
                   rician_k=float(d["rician_k"]),
                   pathloss_spread_db=float(d["spread_db"]))

    def to_dict(self) -> dict:
        return {"name": self.name, "taps_us": [t * 1e6 for t in self.delays],
                "powers": list(self.powers), "rician_k": self.rician_k,
                "spread_db": self.pathloss_spread_db}


_US = 1e-6
PRESETS = {
    "UMi": ScenarioProfile("UMi", (0.0, 0.1 * _US, 0.3 * _US, 0.7 * _US),
                           (0.5, 0.3, 0.15, 0.05), 3.0, 2.0),
    "UMa": ScenarioProfile("UMa", (0.0, 0.05 * _US, 0.15 * _US, 0.3 * _US),
                           (0.6, 0.25, 0.1, 0.05), 9.0, 2.0),
    "RMa": ScenarioProfile("RMa", (0.0, 0.2 * _US, 0.5 * _US, 1.0 * _US, 1.5 * _US, 2.0 * _US),
                           (0.35, 0.25, 0.15, 0.12, 0.08, 0.05), 0.0, 3.0),
}


def scenario_profile(name) -> ScenarioProfile:
    """Preset lookup; ``name`` may also be a path to a JSON profile file."""
    if isinstance(name, ScenarioProfile):
        return name
    if name in PRESETS:
        return PRESETS[name]
    if isinstance(name, (str, os.PathLike)) and os.path.isfile(name):
        return load_profile(name)
    raise KeyError(f"unknown scenario {name!r}; expected one of {sorted(PRESETS)} or a JSON file")


def load_profile(path) -> ScenarioProfile:
    with open(path) as fh:
        d = json.load(fh)
    return ScenarioProfile.from_dict(d, name=os.path.splitext(os.path.basename(str(path)))[0])


@dataclass
class ChannelTensor:
    h: np.ndarray            # complex [..., N_f, N_t, N_k, N_m]
    profile: ScenarioProfile | None
    seed: int | None

    @property
    def shape(self):
        return self.h.shape


def frequency_response(delays, gains, n_f: int, spacing: float) -> np.ndarray:
    """H[..., f] = sum_l g_l exp(-j 2 pi f spacing tau_l) for f = 0..n_f-1.

    ``gains`` has the taps on its last axis.
    """
    delays = np.asarray(delays, dtype=float)
    f = np.arange(n_f)
    steer = np.exp(-2j * np.pi * spacing * f[:, None] * delays[None, :])   # [N_f, L]
    return np.asarray(gains) @ steer.T


def _tap_gains(profile: ScenarioProfile, shape: tuple, rng: np.random.Generator) -> np.ndarray:
    p = np.asarray(profile.powers)
    n_taps = len(p)
    g = (rng.standard_normal(shape + (n_taps,)) + 1j * rng.standard_normal(shape + (n_taps,))) / np.sqrt(2)
    k = profile.rician_k
    if k > 0:
        los = np.exp(2j * np.pi * rng.random(shape))
        g[..., 0] = np.sqrt(k / (k + 1)) * los + np.sqrt(1 / (k + 1)) * g[..., 0]
    return g * np.sqrt(p)


def sample_channels(profile, batch: int, n_f: int, n_t: int, n_k: int, n_m: int,
                    spacing: float = 15e3, rng: np.random.Generator | int | None = None,
                    lognormal: bool = True) -> np.ndarray:
    """Batch of block-fading channels, complex128 [batch, N_f, N_t, N_k, N_m]."""
    profile = scenario_profile(profile)
    if min(batch, n_f, n_t, n_k, n_m) < 1 or spacing <= 0:
        raise ValueError("dimensions must be >= 1 and spacing > 0")
    rng = np.random.default_rng(rng)
    gains = _tap_gains(profile, (batch, n_k, n_m), rng)
    hf = frequency_response(profile.delays, gains, n_f, spacing)          # [B, K, M, F]
    if lognormal and profile.pathloss_spread_db > 0:
        db = rng.standard_normal((batch, n_k, 1, 1)) * profile.pathloss_spread_db
        hf = hf * 10 ** (db / 20)
    h = np.transpose(hf, (0, 3, 1, 2))[:, :, None]                        # [B, F, 1, K, M]
    return np.ascontiguousarray(np.broadcast_to(h, (batch, n_f, n_t, n_k, n_m)))


def sample_channel(profile, n_f: int, n_t: int, n_k: int, n_m: int, spacing: float = 15e3,
                   seed: int = 0, lognormal: bool = True) -> ChannelTensor:
    profile = scenario_profile(profile)
    h = sample_channels(profile, 1, n_f, n_t, n_k, n_m, spacing, rng=seed, lognormal=lognormal)[0]
    return ChannelTensor(h, profile, seed)


def deep_fade_two_ray(batch: int, n_f: int, n_t: int, n_k: int, n_m: int, spacing: float = 15e3,
                      rng: np.random.Generator | int | None = None) -> np.ndarray:
    """Two equal taps whose notch lands exactly on a subcarrier.

    Every link shares the tap-gain ratio, so at the notch subcarriers the
    whole channel matrix vanishes. Used to provoke zero-forcing breakdown.
    """
    rng = np.random.default_rng(rng)
    notch = rng.integers(1, max(2, n_f), size=batch)
    tau = 1.0 / (2.0 * spacing * notch)                                   # f*spacing*tau = 1/2 at f = notch
    f = np.arange(n_f)
    shape_f = 1 + np.exp(-2j * np.pi * spacing * f[None, :] * tau[:, None])   # [B, F]
    g = (rng.standard_normal((batch, n_k, n_m)) + 1j * rng.standard_normal((batch, n_k, n_m))) / np.sqrt(2)
    h = shape_f[:, :, None, None, None] * g[:, None, None, :, :] / np.sqrt(2)
    return np.ascontiguousarray(np.broadcast_to(h, (batch, n_f, n_t, n_k, n_m)))


def apply_channel(h, x: np.ndarray, noise_var: float, rng: np.random.Generator | int | None = None) -> np.ndarray:
    """y = H x + n per resource element.

    ``h`` is [..., N_f, N_t, N_k, N_m] (or a ChannelTensor), ``x`` is
    [..., N_f, N_t, N_m]; returns [..., N_f, N_t, N_k].
    """
    h = h.h if isinstance(h, ChannelTensor) else np.asarray(h)
    x = np.asarray(x)
    if noise_var < 0:
        raise ValueError("noise variance must be nonnegative")
    if h.shape[-1] != x.shape[-1] or h.shape[-4:-2] != x.shape[-3:-1]:
        raise ValueError(f"channel {h.shape} and signal {x.shape} dimensions disagree")
    y = np.einsum("...km,...m->...k", h, x)
    if noise_var > 0:
        rng = np.random.default_rng(rng)
        n = rng.standard_normal(y.shape + (2,)) * np.sqrt(noise_var / 2)
        y = y + (n[..., 0] + 1j * n[..., 1])
    return y


def complex_noise(shape, noise_var, rng) -> np.ndarray:
    """CN(0, noise_var) samples; ``noise_var`` broadcasts against ``shape``."""
    n = rng.standard_normal(tuple(shape) + (2,))
    return (n[..., 0] + 1j * n[..., 1]) * np.sqrt(np.asarray(noise_var) / 2)


def ebn0_to_noise_var(ebn0_db, m: int, r: float, es: float = 1.0):
    """sigma^2 = Es / (m r 10^(EbN0/10))."""
    if m < 1 or not 0 < r <= 1:
        raise ValueError("need m >= 1 and 0 < r <= 1")
    return es / (m * float(r) * 10 ** (np.asarray(ebn0_db, dtype=float) / 10))


def snr_to_noise_var(snr_db, es: float = 1.0):
    """Per-antenna symbol SNR; equals ``ebn0_to_noise_var`` with m = r = 1."""
    return ebn0_to_noise_var(snr_db, 1, 1.0, es)


def csi_magnitude(h: np.ndarray) -> np.ndarray:
    """Mean |H| over (t, k, m): [..., N_f, N_t, N_k, N_m] -> [..., N_f]."""
    return np.abs(h).mean(axis=(-3, -2, -1))
