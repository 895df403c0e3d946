"""Block-DCT image codec and budget-driven rate control.

Images are converted to YCbCr, split into 8x8 blocks, transformed with an
orthonormal DCT and quantized with step scale 2 ** (5 - quality): AC terms
by rounding against the JPEG tables, DC terms by flooring against
DC_STEP * scale. Flooring nests the DC levels across qualities, so the DPCM
differences, like the AC magnitudes, never grow as quality drops and the
stream length is nonincreasing in quality. Coefficients are zigzag-scanned; the DC term is coded
differentially and the AC terms as (run, level) pairs, all with
Exp-Golomb codes, which are canonical prefix codes needing no table.

Stream layout: 4-bit magic, 3-bit quality, then the blocks channel by
channel in raster order.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from ..config import LinkConfig

MAGIC_BITS = (1, 0, 1, 1)
QUALITY_BITS = 3
N_QUALITY = 8
CRC_BITS = 16
TAIL_BITS = 6
DC_STEP = 8.0          # at quality 5

_LUMA = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61], [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56], [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77], [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101], [72, 92, 95, 98, 112, 100, 103, 99]], dtype=float)
_CHROMA = np.full((8, 8), 99.0)
_CHROMA[:4, :4] = [[17, 18, 24, 47], [18, 21, 26, 66], [24, 26, 56, 99], [47, 66, 99, 99]]


class CodecError(ValueError):
    """The bitstream cannot be decoded (bad header, overrun, or invalid index)."""


@dataclass(frozen=True)
class Bitstream:
    bits: np.ndarray       # uint8 0/1
    quality: int

    @property
    def length(self) -> int:
        return int(self.bits.size)

    def packed(self) -> bytes:
        return np.packbits(self.bits).tobytes()


@dataclass(frozen=True)
class Failure:
    """Even the lowest quality exceeds the budget."""
    budget: int
    min_length: int


@lru_cache(maxsize=1)
def _dct_matrix() -> np.ndarray:
    k = np.arange(8)
    c = np.cos(np.pi * (2 * k[None, :] + 1) * k[:, None] / 16) * np.sqrt(2 / 8)
    c[0] /= np.sqrt(2)
    return c


@lru_cache(maxsize=1)
def _zigzag() -> np.ndarray:
    order = sorted(((i, j) for i in range(8) for j in range(8)),
                   key=lambda p: (p[0] + p[1], p[1] if (p[0] + p[1]) % 2 == 0 else p[0]))
    return np.array([i * 8 + j for i, j in order])


def _rgb_to_ycc(img: np.ndarray) -> np.ndarray:
    r, g, b = img[..., 0], img[..., 1], img[..., 2]
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = 128 - 0.168736 * r - 0.331264 * g + 0.5 * b
    cr = 128 + 0.5 * r - 0.418688 * g - 0.081312 * b
    return np.stack([y, cb, cr], axis=-1)


def _ycc_to_rgb(ycc: np.ndarray) -> np.ndarray:
    y, cb, cr = ycc[..., 0], ycc[..., 1] - 128, ycc[..., 2] - 128
    return np.stack([y + 1.402 * cr, y - 0.344136 * cb - 0.714136 * cr, y + 1.772 * cb], axis=-1)


def _qtables(quality: int) -> list:
    scale = 2.0 ** (5 - quality)
    tables = [np.maximum(_LUMA * scale, 1.0), np.maximum(_CHROMA * scale, 1.0), np.maximum(_CHROMA * scale, 1.0)]
    for t in tables:
        t[0, 0] = DC_STEP * scale
    return tables


def _blocks(plane: np.ndarray) -> np.ndarray:
    h, w = plane.shape
    return plane.reshape(h // 8, 8, w // 8, 8).transpose(0, 2, 1, 3).reshape(-1, 8, 8)


def _unblocks(blocks: np.ndarray, h: int, w: int) -> np.ndarray:
    return blocks.reshape(h // 8, w // 8, 8, 8).transpose(0, 2, 1, 3).reshape(h, w)


# Exp-Golomb ----------------------------------------------------------------------------

def _put_ue(out: list, v: int) -> None:
    v += 1
    n = v.bit_length()
    out.extend([0] * (n - 1))
    out.extend((v >> (n - 1 - i)) & 1 for i in range(n))


def _put_se(out: list, v: int) -> None:
    _put_ue(out, 2 * v - 1 if v > 0 else -2 * v)


class _Reader:
    def __init__(self, bits: np.ndarray):
        self.bits = bits
        self.pos = 0

    def bit(self) -> int:
        if self.pos >= self.bits.size:
            raise CodecError(f"bitstream overrun at bit {self.pos}")
        b = int(self.bits[self.pos])
        self.pos += 1
        return b

    def ue(self) -> int:
        zeros = 0
        while self.bit() == 0:
            zeros += 1
            if zeros > 32:
                raise CodecError(f"malformed Exp-Golomb prefix at bit {self.pos}")
        v = 1
        for _ in range(zeros):
            v = (v << 1) | self.bit()
        return v - 1

    def se(self) -> int:
        u = self.ue()
        return (u + 1) // 2 if u % 2 else -(u // 2)


# codec ----------------------------------------------------------------------------------

def dct_codec_encode(image: np.ndarray, quality: int) -> Bitstream:
    """image: float [H, W, 3] in [0, 1] with H, W multiples of 8."""
    image = np.asarray(image, dtype=float)
    if image.ndim != 3 or image.shape[2] != 3 or image.shape[0] % 8 or image.shape[1] % 8:
        raise ValueError(f"image must be [8a, 8b, 3], got {image.shape}")
    if not 0 <= quality < N_QUALITY:
        raise ValueError(f"quality must be in 0..{N_QUALITY - 1}, got {quality}")
    c = _dct_matrix()
    zz = _zigzag()
    ycc = _rgb_to_ycc(np.clip(image, 0, 1) * 255.0) - 128.0
    out = list(MAGIC_BITS) + [(quality >> (QUALITY_BITS - 1 - i)) & 1 for i in range(QUALITY_BITS)]
    for ch, q in enumerate(_qtables(quality)):
        coef = c @ _blocks(ycc[..., ch]) @ c.T
        scaled = (coef / q).reshape(-1, 64)
        levels = np.rint(scaled).astype(np.int64)
        levels[:, 0] = np.floor(scaled[:, 0]).astype(np.int64)
        levels = levels[:, zz]
        prev_dc = 0
        for blk in levels:
            _put_se(out, int(blk[0]) - prev_dc)
            prev_dc = int(blk[0])
            nz = np.flatnonzero(blk[1:]) + 1
            last = 0
            for idx in nz:
                _put_ue(out, int(idx - last))          # run + 1, never 0
                lev = int(blk[idx])
                _put_ue(out, abs(lev) - 1)
                out.append(1 if lev < 0 else 0)
                last = idx
            _put_ue(out, 0)                            # end of block
    return Bitstream(np.array(out, dtype=np.uint8), quality)


def dct_codec_decode(stream, shape=(32, 32, 3)) -> np.ndarray:
    """Inverse of :func:`dct_codec_encode`; trailing bits (padding) are ignored."""
    bits = stream.bits if isinstance(stream, Bitstream) else np.asarray(stream, dtype=np.uint8)
    h, w, _ = shape
    r = _Reader(bits)
    if tuple(r.bit() for _ in MAGIC_BITS) != MAGIC_BITS:
        raise CodecError("bad magic")
    quality = 0
    for _ in range(QUALITY_BITS):
        quality = (quality << 1) | r.bit()
    c = _dct_matrix()
    zz = _zigzag()
    n_blocks = (h // 8) * (w // 8)
    planes = []
    for q in _qtables(quality):
        levels = np.zeros((n_blocks, 64))
        prev_dc = 0
        for b in range(n_blocks):
            prev_dc += r.se()
            levels[b, 0] = prev_dc
            idx = 0
            while True:
                step = r.ue()
                if step == 0:
                    break
                idx += step
                if idx > 63:
                    raise CodecError(f"coefficient index {idx} > 63 at bit {r.pos}")
                mag = r.ue() + 1
                levels[b, idx] = -mag if r.bit() else mag
        levels[:, 0] += 0.5                            # DC reconstructs at the bin centre
        coef = np.zeros((n_blocks, 64))
        coef[:, zz] = levels
        planes.append(_unblocks(c.T @ (coef.reshape(-1, 8, 8) * q) @ c, h, w))
    rgb = _ycc_to_rgb(np.stack(planes, axis=-1) + 128.0)
    return np.clip(rgb / 255.0, 0.0, 1.0)


# rate control --------------------------------------------------------------------------

def b_max(cfg: LinkConfig, m: int, r) -> int:
    """Information bits one user stream can carry: floor(N_st * N_sf * m * r)."""
    if m < 1:
        raise ValueError("m must be >= 1")
    r = Fraction(r).limit_denominator(64)
    if not 0 < r <= 1:
        raise ValueError("code rate must be in (0, 1]")
    return int(cfg.n_st * cfg.n_sf * m * r)


def source_budget(cfg: LinkConfig, m: int, r) -> int:
    """Bits left for the image after the CRC and the trellis tail."""
    return b_max(cfg, m, r) - CRC_BITS - TAIL_BITS


def rate_control(image: np.ndarray, budget_bits: int, levels=range(N_QUALITY)) -> Bitstream | Failure:
    """Highest quality whose stream fits ``budget_bits``; the stream is zero-padded to the budget."""
    if budget_bits <= 0:
        return Failure(int(budget_bits), -1)
    shortest = None
    for q in sorted(levels, reverse=True):
        bs = dct_codec_encode(image, q)
        if bs.length <= budget_bits:
            padded = np.zeros(budget_bits, dtype=np.uint8)
            padded[:bs.length] = bs.bits
            return Bitstream(padded, q)
        shortest = bs.length if shortest is None else min(shortest, bs.length)
    return Failure(int(budget_bits), int(shortest))
