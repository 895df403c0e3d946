"""Link, coding and training configuration records."""

from __future__ import annotations

import dataclasses
import functools
import json
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

SCENARIOS = ("UMi", "UMa", "RMa")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PilotSpec:
    """Pilot OFDM symbols and the per-user QPSK sequence.

    ``sequence`` has shape [N_f, len(symbol_indices), N_k] with unit-modulus
    entries. Within pilot symbols user k owns subcarriers f with
    f % N_k == k; everyone else transmits zero there.
    """

    symbol_indices: tuple
    sequence: np.ndarray = field(repr=False, compare=False)

    @classmethod
    def qpsk(cls, n_f: int, n_k: int, symbol_indices=(2, 11), seed: int = 2024) -> "PilotSpec":
        rng = np.random.default_rng(seed)
        q = rng.integers(0, 4, size=(n_f, len(symbol_indices), n_k))
        seq = np.exp(1j * np.pi / 4 * (2 * q + 1))
        return cls(tuple(int(i) for i in symbol_indices), seq)

    def comb_mask(self) -> np.ndarray:
        """Boolean [N_f, N_k]: True where user k owns subcarrier f."""
        n_f, _, n_k = self.sequence.shape
        return (np.arange(n_f)[:, None] % n_k) == np.arange(n_k)[None, :]


@dataclass(frozen=True)
class LinkConfig:
    n_f: int = 32
    n_t: int = 14
    n_k: int = 4
    n_m: int = 4
    power: float = 1.0
    pilot_symbols: tuple = (2, 11)
    pilot_seed: int = 2024
    subcarrier_spacing: float = 15e3
    carrier: float = 2.6e9
    cp_length: int = 20

    def __post_init__(self):
        for name in ("n_f", "n_t", "n_k", "n_m"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.n_k > self.n_m:
            raise ConfigError("need n_k <= n_m")
        if len(set(self.pilot_symbols)) != len(self.pilot_symbols) or \
                any(not 0 <= t < self.n_t for t in self.pilot_symbols):
            raise ConfigError(f"pilot symbols {self.pilot_symbols} invalid for n_t={self.n_t}")
        if self.power <= 0 or self.subcarrier_spacing <= 0:
            raise ConfigError("power and subcarrier spacing must be positive")
        object.__setattr__(self, "pilot_symbols", tuple(int(t) for t in self.pilot_symbols))

    @property
    def n_sf(self) -> int:
        return self.n_f

    @property
    def n_st(self) -> int:
        return self.n_t - len(self.pilot_symbols)

    @property
    def data_symbols(self) -> tuple:
        return tuple(t for t in range(self.n_t) if t not in self.pilot_symbols)

    @property
    def pilot(self) -> PilotSpec:
        return _pilot_spec(self.n_f, self.n_k, self.pilot_symbols, self.pilot_seed)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["pilot_symbols"] = list(self.pilot_symbols)
        return d


@dataclass(frozen=True)
class SsccConfig:
    m: int = 2
    r: Fraction = Fraction(1, 2)
    quality_levels: tuple = tuple(range(8))
    csi_mode: str = "perfect"

    def __post_init__(self):
        object.__setattr__(self, "r", Fraction(self.r).limit_denominator(16))
        if self.m not in (2, 4):
            raise ConfigError(f"modulation order m must be 2 or 4, got {self.m}")
        if self.r not in (Fraction(1, 2), Fraction(2, 3)):
            raise ConfigError(f"code rate must be 1/2 or 2/3, got {self.r}")
        if self.csi_mode not in ("perfect", "ls"):
            raise ConfigError(f"csi_mode must be 'perfect' or 'ls', got {self.csi_mode!r}")

    def to_dict(self) -> dict:
        return {"m": self.m, "r": str(self.r), "quality_levels": list(self.quality_levels),
                "csi_mode": self.csi_mode}


# Desk-scale training protocol: with only 2000 images x 10 epochs, batch 64
# leaves too few optimizer steps for the classifier head to separate classes.
DESK_SCALE = {"batch": 16, "epochs": 10, "n_images": 2000}


@dataclass(frozen=True)
class TrainConfig:
    batch: int = 64
    epochs: int = 10
    lr: float = 1e-3
    lam: float = 0.1
    recon_scale: float = 100.0        # weight on the pixel MSE term of the loss
    snr_range_db: tuple = (-7.0, 7.0)
    scenarios: tuple = SCENARIOS
    link: LinkConfig = field(default_factory=LinkConfig)
    seed: int = 0
    dataset: str = "synth"
    n_images: int = 2000
    checkpoint: str = "checkpoint.semcom"
    channel_model: str = "tdl"        # "tdl" (scenario presets) | "two_ray" (deep-fade stress test)
    max_grad_norm: float = 1e6        # larger gradient norms abort training

    def __post_init__(self):
        if self.batch < 1:
            raise ConfigError("batch must be >= 1")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.lam < 0:
            raise ConfigError("lam must be nonnegative")
        if self.recon_scale <= 0:
            raise ConfigError("recon_scale must be positive")
        lo, hi = self.snr_range_db
        if not lo <= hi:
            raise ConfigError("snr range is empty")
        if self.batch % self.link.n_k:
            raise ConfigError(f"batch {self.batch} must be a multiple of n_k={self.link.n_k}")
        bad = [s for s in self.scenarios if s not in SCENARIOS]
        if bad or not self.scenarios:
            raise ConfigError(f"unknown or empty scenarios {bad}")
        if self.channel_model not in ("tdl", "two_ray"):
            raise ConfigError(f"channel_model must be 'tdl' or 'two_ray', got {self.channel_model!r}")
        if self.epochs < 1 or self.n_images < 1:
            raise ConfigError("epochs and n_images must be >= 1")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["link"] = self.link.to_dict()
        d["snr_range_db"] = list(self.snr_range_db)
        d["scenarios"] = list(self.scenarios)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        link = LinkConfig(**_tuplify(d.pop("link", {})))
        return cls(link=link, **_tuplify(d))


@functools.lru_cache(maxsize=32)
def _pilot_spec(n_f, n_k, symbols, seed) -> PilotSpec:
    spec = PilotSpec.qpsk(n_f, n_k, symbols, seed)
    spec.sequence.setflags(write=False)
    return spec


def _tuplify(d: dict) -> dict:
    return {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}


def link_from_dict(d: dict) -> LinkConfig:
    return LinkConfig(**_tuplify(d))


def sscc_from_dict(d: dict) -> SsccConfig:
    d = _tuplify(d)
    if "r" in d:
        d["r"] = Fraction(str(d["r"]))
    return SsccConfig(**d)


def dumps(d: dict) -> str:
    return json.dumps(d, sort_keys=True)
