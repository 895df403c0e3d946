"""Rate-1/2 K=7 convolutional code (171, 133 octal), puncturing, CRC-16.

LLRs follow the convention L = log P(b=0) / P(b=1), so a positive value
favours bit 0. Punctured positions are re-inserted as zero LLRs.
"""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache

import numpy as np

CONSTRAINT = 7
GENERATORS = (0o171, 0o133)
N_STATES = 1 << (CONSTRAINT - 1)
PUNCTURE_2_3 = np.array([[1, 1], [1, 0]], dtype=bool)    # rows: period step, cols: (g0, g1)
CRC16_POLY = 0x1021
CRC16_INIT = 0xFFFF


class FecError(ValueError):
    pass


def _taps(g: int) -> np.ndarray:
    """Tap weights by delay 0..6 (bit 6 of the generator multiplies the newest input)."""
    return np.array([(g >> (CONSTRAINT - 1 - d)) & 1 for d in range(CONSTRAINT)], dtype=np.int64)


def conv_encode(bits, terminate: bool = True) -> np.ndarray:
    """Rate-1/2 codeword; ``bits`` may be [n] or [batch, n]. Output interleaves (g0, g1) per step."""
    bits = np.asarray(bits, dtype=np.int64)
    if bits.shape[-1] < 1:
        raise FecError("need at least one input bit")
    if np.any((bits != 0) & (bits != 1)):
        raise FecError("input must be 0/1")
    if terminate:
        bits = np.concatenate([bits, np.zeros(bits.shape[:-1] + (CONSTRAINT - 1,), np.int64)], axis=-1)
    n = bits.shape[-1]
    out = np.empty(bits.shape[:-1] + (n, 2), dtype=np.uint8)
    flat = bits.reshape(-1, n)
    for j, g in enumerate(GENERATORS):
        taps = _taps(g)
        conv = np.stack([np.convolve(row, taps)[:n] for row in flat])
        out.reshape(-1, n, 2)[..., j] = conv % 2
    return out.reshape(bits.shape[:-1] + (2 * n,))


@lru_cache(maxsize=1)
def _trellis():
    """Predecessor table: for next state s and choice x, the previous state and the two code bits."""
    taps = [_taps(g) for g in GENERATORS]
    prev = np.empty((N_STATES, 2), dtype=np.int64)
    outs = np.empty((N_STATES, 2, 2), dtype=np.int64)
    for s in range(N_STATES):
        b = s >> (CONSTRAINT - 2)                 # the input bit that produced state s
        for x in range(2):
            p = ((s & (N_STATES // 2 - 1)) << 1) | x
            prev[s, x] = p
            # register: newest bit b, then the six bits of p (most recent first)
            reg = [b] + [(p >> (CONSTRAINT - 2 - i)) & 1 for i in range(CONSTRAINT - 1)]
            outs[s, x] = [int(np.dot(t, reg) % 2) for t in taps]
    return prev, outs


def viterbi_decode(llrs, n_info: int | None = None, terminated: bool = True) -> np.ndarray:
    """Soft-decision maximum-likelihood decoding; ``llrs`` is [2n] or [batch, 2n].

    Returns the input bits without the tail (length ``n_info`` if given).
    """
    llrs = np.asarray(llrs, dtype=np.float64)
    single = llrs.ndim == 1
    llrs = llrs.reshape(1, -1) if single else llrs
    if llrs.shape[-1] % 2:
        raise FecError(f"LLR length {llrs.shape[-1]} is not a whole number of rate-1/2 steps")
    steps = llrs.shape[-1] // 2
    expected = steps - (CONSTRAINT - 1 if terminated else 0)
    if n_info is not None and n_info != expected:
        raise FecError(f"{llrs.shape[-1]} LLRs encode {expected} info bits, caller expects {n_info}")
    if expected < 1:
        raise FecError("codeword shorter than the tail")
    prev, outs = _trellis()
    nb = llrs.shape[0]
    pair = llrs.reshape(nb, steps, 2)
    # correlation metric: sum over code bits of (1 - 2c) * L, maximized
    sign = 1 - 2 * outs                                     # [S, 2, 2]
    metric = np.full((nb, N_STATES), -np.inf)
    metric[:, 0] = 0.0
    decisions = np.empty((steps, nb, N_STATES), dtype=np.uint8)
    for t in range(steps):
        bm = np.einsum("bj,sxj->bsx", pair[:, t], sign)       # [B, S, 2]
        cand = metric[:, prev] + bm                          # [B, S, 2]
        choice = (cand[..., 1] > cand[..., 0]).astype(np.uint8)
        decisions[t] = choice
        metric = np.where(choice == 1, cand[..., 1], cand[..., 0])
    state = np.zeros(nb, dtype=np.int64) if terminated else np.argmax(metric, axis=1)
    bits = np.empty((nb, steps), dtype=np.uint8)
    rows = np.arange(nb)
    for t in range(steps - 1, -1, -1):
        bits[:, t] = state >> (CONSTRAINT - 2)
        state = prev[state, decisions[t, rows, state]]
    bits = bits[:, :expected]
    return bits[0] if single else bits


# puncturing --------------------------------------------------------------------------------

def _mask(n_coded: int, rate) -> np.ndarray:
    rate = Fraction(rate)
    if rate == Fraction(1, 2):
        return np.ones(n_coded, dtype=bool)
    if rate == Fraction(2, 3):
        steps = n_coded // 2
        reps = -(-steps // PUNCTURE_2_3.shape[0])
        return np.tile(PUNCTURE_2_3, (reps, 1))[:steps].reshape(-1)
    raise FecError(f"unsupported code rate {rate}")


def punctured_length(n_coded: int, rate) -> int:
    return int(_mask(n_coded, rate).sum())


def puncture(coded, rate) -> np.ndarray:
    coded = np.asarray(coded)
    return coded[..., _mask(coded.shape[-1], rate)]


def depuncture(llrs, n_coded: int, rate) -> np.ndarray:
    llrs = np.asarray(llrs, dtype=np.float64)
    mask = _mask(n_coded, rate)
    if llrs.shape[-1] != mask.sum():
        raise FecError(f"{llrs.shape[-1]} LLRs, puncturing pattern keeps {mask.sum()} of {n_coded}")
    out = np.zeros(llrs.shape[:-1] + (n_coded,))
    out[..., mask] = llrs
    return out


def coded_length(n_info: int, rate) -> int:
    """Transmitted bits for ``n_info`` info bits after tail termination and puncturing."""
    return punctured_length(2 * (n_info + CONSTRAINT - 1), rate)


# CRC ---------------------------------------------------------------------------------------

def crc16(bits) -> np.ndarray:
    """CRC-16-CCITT (poly 0x1021, init 0xFFFF, MSB first) of [n] or [batch, n] bits -> 16 bits."""
    bits = np.asarray(bits, dtype=np.int64)
    flat = bits.reshape(-1, bits.shape[-1])
    reg = np.full(flat.shape[0], CRC16_INIT, dtype=np.int64)
    for i in range(flat.shape[1]):
        top = ((reg >> 15) & 1) ^ flat[:, i]
        reg = ((reg << 1) & 0xFFFF) ^ np.where(top == 1, CRC16_POLY, 0)
    out = ((reg[:, None] >> np.arange(15, -1, -1)[None, :]) & 1).astype(np.uint8)
    return out.reshape(bits.shape[:-1] + (16,))


def crc_attach(bits) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.uint8)
    return np.concatenate([bits, crc16(bits)], axis=-1)


def crc_check(bits_with_crc) -> np.ndarray:
    b = np.asarray(bits_with_crc, dtype=np.uint8)
    return np.all(crc16(b[..., :-16]) == b[..., -16:], axis=-1)
