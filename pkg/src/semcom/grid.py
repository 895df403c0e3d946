"""OFDM resource-grid bookkeeping.

Grids are complex arrays ``[..., N_f, N_t, S]`` where S counts user streams
or antenna ports. Each transform has a numpy form and a differentiable form
(suffix ``_t``) working on :class:`~semcom.autodiff.cplx.CTensor` pairs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import DiffTensor, ops
from .autodiff import cplx
from .autodiff.cplx import CTensor
from .config import LinkConfig

GRID_MAGIC = "GRID v1"


class GridError(ValueError):
    pass


@dataclass
class Grid:
    data: np.ndarray   # complex [N_f, N_t, S]
    kind: str          # "streams" | "antennas"

    def __post_init__(self):
        if self.kind not in ("streams", "antennas"):
            raise GridError(f"grid kind must be 'streams' or 'antennas', got {self.kind!r}")
        if self.data.ndim != 3:
            raise GridError(f"grid data must be [N_f, N_t, S], got {self.data.shape}")


def pilot_reference(cfg: LinkConfig) -> np.ndarray:
    """Sparse Y_p: complex [N_f, N_t, N_k], pilots on owned comb REs, zero elsewhere."""
    spec = cfg.pilot
    yp = np.zeros((cfg.n_f, cfg.n_t, cfg.n_k), dtype=np.complex128)
    owned = spec.comb_mask()
    for i, t in enumerate(spec.symbol_indices):
        yp[:, t, :] = np.where(owned, spec.sequence[:, i, :], 0)
    return yp


def _check_features(shape, cfg: LinkConfig):
    want = (cfg.n_sf, cfg.n_st, cfg.n_k, 2)
    if tuple(shape[-4:]) != want:
        raise GridError(f"features must end in {want}, got {tuple(shape)}")


def map_to_grid(features: np.ndarray, cfg: LinkConfig) -> np.ndarray:
    """Real [..., N_sf, N_st, N_k, 2] -> complex [..., N_f, N_t, N_k] with pilots."""
    features = np.asarray(features)
    _check_features(features.shape, cfg)
    lead = features.shape[:-4]
    out = np.zeros(lead + (cfg.n_f, cfg.n_t, cfg.n_k), dtype=np.complex128)
    out[..., list(cfg.data_symbols), :] = features[..., 0] + 1j * features[..., 1]
    return out + pilot_reference(cfg)


def remove_pilots(grid: np.ndarray, cfg: LinkConfig) -> np.ndarray:
    """Complex [..., N_f, N_t, S] -> real [..., N_sf, N_st, S, 2]."""
    grid = np.asarray(grid)
    if grid.shape[-3:-1] != (cfg.n_f, cfg.n_t):
        raise GridError(f"grid {grid.shape} does not match N_f={cfg.n_f}, N_t={cfg.n_t}")
    data = grid[..., list(cfg.data_symbols), :]
    return np.stack([data.real, data.imag], axis=-1)


def transmit_power(x: np.ndarray) -> np.ndarray:
    """Mean per-RE power sum_m |x|^2 over the grid, per leading index."""
    return (np.abs(x) ** 2).sum(axis=-1).mean(axis=(-2, -1))


def power_normalize(x: np.ndarray, power: float = 1.0) -> np.ndarray:
    """Scale each grid [..., N_f, N_t, N_m] to mean per-RE power ``power``."""
    x = np.asarray(x)
    p = transmit_power(x)
    if np.any(p == 0):
        raise GridError("cannot power-normalize an all-zero grid")
    return x * np.sqrt(power / p)[..., None, None, None]


# differentiable forms ---------------------------------------------------------

def map_to_grid_t(features: DiffTensor, cfg: LinkConfig) -> CTensor:
    _check_features(features.shape, cfg)
    feats = cplx.from_pairs(features)                       # [..., N_sf, N_st, N_k]
    axis = feats.re.ndim - 2
    yp = pilot_reference(cfg)
    re = ops.add(ops.place(feats.re, cfg.data_symbols, axis, cfg.n_t),
                 np.asarray(yp.real, dtype=features.dtype))
    im = ops.add(ops.place(feats.im, cfg.data_symbols, axis, cfg.n_t),
                 np.asarray(yp.imag, dtype=features.dtype))
    return CTensor(re, im)


def remove_pilots_t(grid: CTensor, cfg: LinkConfig) -> DiffTensor:
    axis = grid.re.ndim - 2
    data = cplx.take(grid, cfg.data_symbols, axis)
    return ops.stack([data.re, data.im], axis=-1)


def power_normalize_t(x: CTensor, power: float = 1.0) -> CTensor:
    p = ops.mean(ops.sum(cplx.abs2(x), axis=-1), axis=(-2, -1))       # [...]
    if np.any(p.data == 0):
        raise GridError("cannot power-normalize an all-zero grid")
    s = ops.sqrt(ops.div(np.asarray(power, dtype=x.re.dtype), p))
    s = s.reshape(s.shape + (1, 1, 1))
    return cplx.scale(x, s)


# debug dump -----------------------------------------------------------------

def dump_grid(path, grid: Grid) -> None:
    """Header line ``GRID v1 N_f N_t S kind`` then little-endian float32 (re, im) pairs."""
    n_f, n_t, s = grid.data.shape
    inter = np.empty(grid.data.shape + (2,), dtype="<f4")
    inter[..., 0] = grid.data.real
    inter[..., 1] = grid.data.imag
    with open(path, "wb") as fh:
        fh.write(f"{GRID_MAGIC} {n_f} {n_t} {s} {grid.kind}\n".encode("ascii"))
        fh.write(inter.tobytes())


def load_grid(path) -> Grid:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii", errors="replace").split()
        payload = fh.read()
    if len(header) != 6 or " ".join(header[:2]) != GRID_MAGIC:
        raise GridError(f"{path}: not a grid dump (header {header!r})")
    n_f, n_t, s = (int(v) for v in header[2:5])
    want = n_f * n_t * s * 2 * 4
    if len(payload) != want:
        raise GridError(f"{path}: expected {want} payload bytes, found {len(payload)}")
    inter = np.frombuffer(payload, dtype="<f4").reshape(n_f, n_t, s, 2)
    return Grid(inter[..., 0] + 1j * inter[..., 1], header[5])
