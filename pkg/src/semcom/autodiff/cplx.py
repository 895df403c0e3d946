"""Complex arithmetic on (real, imag) pairs of DiffTensors."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from . import ops
from .tensor import DEFAULT_DTYPE, DiffTensor, as_tensor


class CTensor(NamedTuple):
    re: DiffTensor
    im: DiffTensor

    @property
    def shape(self):
        return self.re.shape

    def numpy(self) -> np.ndarray:
        return self.re.data + 1j * self.im.data


def from_complex(z: np.ndarray, dtype=DEFAULT_DTYPE) -> CTensor:
    z = np.asarray(z)
    return CTensor(DiffTensor(z.real.astype(dtype)), DiffTensor(z.imag.astype(dtype)))


def from_pairs(x: DiffTensor) -> CTensor:
    """Split a trailing (re, im) axis of size 2."""
    return CTensor(ops.take(x, [0], -1).reshape(x.shape[:-1]),
                   ops.take(x, [1], -1).reshape(x.shape[:-1]))


def to_pairs(z: CTensor) -> DiffTensor:
    return ops.stack([z.re, z.im], axis=-1)


def add(a: CTensor, b: CTensor) -> CTensor:
    return CTensor(ops.add(a.re, b.re), ops.add(a.im, b.im))


def mul(a: CTensor, b: CTensor) -> CTensor:
    return CTensor(ops.sub(ops.mul(a.re, b.re), ops.mul(a.im, b.im)),
                   ops.add(ops.mul(a.re, b.im), ops.mul(a.im, b.re)))


def scale(a: CTensor, s) -> CTensor:
    return CTensor(ops.mul(a.re, s), ops.mul(a.im, s))


def matmul(a: CTensor, b: CTensor) -> CTensor:
    return CTensor(ops.sub(ops.matmul(a.re, b.re), ops.matmul(a.im, b.im)),
                   ops.add(ops.matmul(a.re, b.im), ops.matmul(a.im, b.re)))


def conj_transpose(a: CTensor) -> CTensor:
    axes = tuple(range(a.re.ndim - 2)) + (a.re.ndim - 1, a.re.ndim - 2)
    return CTensor(ops.transpose(a.re, axes), ops.neg(ops.transpose(a.im, axes)))


def abs2(a: CTensor) -> DiffTensor:
    return ops.add(ops.square(a.re), ops.square(a.im))


def reshape(a: CTensor, shape) -> CTensor:
    return CTensor(ops.reshape(a.re, shape), ops.reshape(a.im, shape))


def take(a: CTensor, idx, axis: int) -> CTensor:
    return CTensor(ops.take(a.re, idx, axis), ops.take(a.im, idx, axis))


def as_ctensor(z) -> CTensor:
    if isinstance(z, CTensor):
        return z
    return from_complex(z)


def real_constant(x, like: DiffTensor) -> DiffTensor:
    return as_tensor(np.asarray(x, dtype=like.dtype))
