"""Layer primitives over NHWC tensors.

Convolution kernels are laid out ``[kh, kw, Cin, Cout]`` and depthwise
kernels ``[kh, kw, C]``. "same" padding follows the usual zero-padding rule
``out = ceil(in / stride)`` with any odd remainder padded at the bottom/right.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .tensor import ContractError, DiffTensor, DimensionError, as_tensor, make_result

BN_EPS = 1e-5
BN_MOMENTUM = 0.9


def _out_and_pads(n: int, k: int, stride: int, padding: str) -> tuple[int, int, int]:
    if padding == "same":
        out = -(-n // stride)
        total = max((out - 1) * stride + k - n, 0)
        return out, total // 2, total - total // 2
    if padding == "valid":
        if k > n:
            raise DimensionError(f"kernel {k} larger than input {n} with valid padding")
        return (n - k) // stride + 1, 0, 0
    raise ContractError(f"unknown padding {padding!r}")


def _pad(x: np.ndarray, ph: tuple, pw: tuple) -> np.ndarray:
    if ph == (0, 0) and pw == (0, 0):
        return x
    return np.pad(x, ((0, 0), ph, pw, (0, 0)))


def _check_conv(x: DiffTensor, kh: int, kw: int, stride: int):
    if x.ndim != 4:
        raise DimensionError(f"expected NHWC input, got shape {x.shape}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ContractError(f"kernel dims must be odd, got {kh}x{kw}")
    if stride < 1:
        raise ContractError("stride must be >= 1")


def conv2d(x, kernel, stride: int = 1, padding: str = "same") -> DiffTensor:
    x = as_tensor(x)
    kernel = as_tensor(kernel)
    kh, kw, cin, cout = kernel.shape
    _check_conv(x, kh, kw, stride)
    if x.shape[3] != cin:
        raise DimensionError(f"input has {x.shape[3]} channels, kernel expects {cin}")
    b, h, w, _ = x.shape
    ho, pt, pb = _out_and_pads(h, kh, stride, padding)
    wo, pl, pr = _out_and_pads(w, kw, stride, padding)
    xp = _pad(x.data, (pt, pb), (pl, pr))

    if kh == 1 and kw == 1:
        cols = xp[:, ::stride, ::stride, :][:, :ho, :wo, :].reshape(-1, cin)
    else:
        cols = np.empty((b, ho, wo, kh, kw, cin), dtype=xp.dtype)
        for i in range(kh):
            for j in range(kw):
                cols[:, :, :, i, j, :] = xp[:, i:i + stride * ho:stride, j:j + stride * wo:stride, :]
        cols = cols.reshape(-1, kh * kw * cin)
    wmat = kernel.data.reshape(kh * kw * cin, cout)
    out = (cols @ wmat).reshape(b, ho, wo, cout)

    def bwd(g):
        g2 = g.reshape(-1, cout)
        gk = (cols.T @ g2).reshape(kernel.shape) if kernel.requires_grad else None
        gx = None
        if x.requires_grad:
            gcols = (g2 @ wmat.T).reshape(b, ho, wo, kh, kw, cin)
            gxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, i:i + stride * ho:stride, j:j + stride * wo:stride, :] += gcols[:, :, :, i, j, :]
            gx = gxp[:, pt:pt + h, pl:pl + w, :]
        return gx, gk

    return make_result(out, (x, kernel), bwd)


def depthwise_conv2d(x, kernel, stride: int = 1, padding: str = "same") -> DiffTensor:
    x = as_tensor(x)
    kernel = as_tensor(kernel)
    kh, kw, c = kernel.shape
    _check_conv(x, kh, kw, stride)
    if x.shape[3] != c:
        raise DimensionError(f"input has {x.shape[3]} channels, depthwise kernel expects {c}")
    b, h, w, _ = x.shape
    ho, pt, pb = _out_and_pads(h, kh, stride, padding)
    wo, pl, pr = _out_and_pads(w, kw, stride, padding)
    xp = _pad(x.data, (pt, pb), (pl, pr))

    def window(i, j):
        return xp[:, i:i + stride * ho:stride, j:j + stride * wo:stride, :]

    out = np.zeros((b, ho, wo, c), dtype=xp.dtype)
    for i in range(kh):
        for j in range(kw):
            out += window(i, j) * kernel.data[i, j]

    def bwd(g):
        gk = np.empty_like(kernel.data) if kernel.requires_grad else None
        gxp = np.zeros_like(xp) if x.requires_grad else None
        for i in range(kh):
            for j in range(kw):
                if gk is not None:
                    gk[i, j] = np.einsum("bhwc,bhwc->c", window(i, j), g)
                if gxp is not None:
                    gxp[:, i:i + stride * ho:stride, j:j + stride * wo:stride, :] += g * kernel.data[i, j]
        gx = gxp[:, pt:pt + h, pl:pl + w, :] if gxp is not None else None
        return gx, gk

    return make_result(out, (x, kernel), bwd)


def depthwise_separable_conv2d(x, depthwise_kernel, pointwise_kernel, stride: int = 1,
                               padding: str = "same") -> DiffTensor:
    """Per-channel spatial filtering followed by a 1x1 channel mix."""
    pointwise_kernel = as_tensor(pointwise_kernel)
    if pointwise_kernel.shape[:2] != (1, 1):
        raise DimensionError(f"pointwise kernel must be 1x1, got {pointwise_kernel.shape}")
    y = depthwise_conv2d(x, depthwise_kernel, stride=stride, padding=padding)
    return conv2d(y, pointwise_kernel, stride=1, padding="same")


def dense(x, weights, bias=None) -> DiffTensor:
    x = as_tensor(x)
    weights = as_tensor(weights)
    if x.ndim != 2 or weights.ndim != 2 or x.shape[1] != weights.shape[0]:
        raise DimensionError(f"dense: input {x.shape} incompatible with weights {weights.shape}")
    y = ops.matmul(x, weights)
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (weights.shape[1],):
            raise DimensionError(f"dense: bias {bias.shape} vs {weights.shape[1]} outputs")
        y = ops.add(y, bias)
    return y


@dataclass
class RunningStats:
    mean: np.ndarray
    var: np.ndarray

    @classmethod
    def fresh(cls, channels: int, dtype=np.float32) -> "RunningStats":
        return cls(np.zeros(channels, dtype=dtype), np.ones(channels, dtype=dtype))


def batch_norm(x, gamma, beta, stats: RunningStats | None = None, mode: str = "train",
               eps: float = BN_EPS, momentum: float = BN_MOMENTUM) -> DiffTensor:
    """Normalize over every axis but the trailing channel axis."""
    x = as_tensor(x)
    gamma = as_tensor(gamma)
    beta = as_tensor(beta)
    c = x.shape[-1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise DimensionError(f"batch_norm: {c} channels but gamma {gamma.shape}, beta {beta.shape}")
    axes = tuple(range(x.ndim - 1))
    n = x.size // c
    if mode == "train":
        if n < 2:
            raise ContractError("batch_norm in train mode needs more than one value per channel")
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        if stats is not None:
            stats.mean[...] = momentum * stats.mean + (1 - momentum) * mu
            stats.var[...] = momentum * stats.var + (1 - momentum) * var * (n / (n - 1))
    elif mode == "infer":
        if stats is None:
            raise ContractError("batch_norm in infer mode needs running stats")
        mu, var = stats.mean, stats.var
    else:
        raise ContractError(f"unknown batch_norm mode {mode!r}")
    inv_std = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    xhat = (x.data - mu) * inv_std
    out = xhat * gamma.data + beta.data

    def bwd(g):
        gg = (g * xhat).sum(axis=axes) if gamma.requires_grad else None
        gb = g.sum(axis=axes) if beta.requires_grad else None
        gx = None
        if x.requires_grad:
            gxhat = g * gamma.data
            if mode == "train":
                gx = inv_std / n * (n * gxhat - gxhat.sum(axis=axes)
                                    - xhat * (gxhat * xhat).sum(axis=axes))
            else:
                gx = gxhat * inv_std
        return gx, gg, gb

    return make_result(out.astype(x.dtype), (x, gamma, beta), bwd)


def _pool_windows(x: np.ndarray, window: int, stride: int):
    b, h, w, c = x.shape
    if window > h or window > w:
        raise DimensionError(f"pool window {window} exceeds spatial dims {h}x{w}")
    ho = (h - window) // stride + 1
    wo = (w - window) // stride + 1
    return ho, wo


def max_pool2d(x, window: int = 2, stride: int | None = None) -> DiffTensor:
    """Max pooling (valid). Ties go to the first element in row-major order."""
    x = as_tensor(x)
    stride = stride or window
    ho, wo = _pool_windows(x.data, window, stride)
    best = None
    arg = np.zeros((x.shape[0], ho, wo, x.shape[3]), dtype=np.int32)
    for i in range(window):
        for j in range(window):
            v = x.data[:, i:i + stride * ho:stride, j:j + stride * wo:stride, :]
            if best is None:
                best = v.copy()
                continue
            better = v > best
            best = np.where(better, v, best)
            arg[better] = i * window + j

    def bwd(g):
        gx = np.zeros_like(x.data)
        for i in range(window):
            for j in range(window):
                hit = arg == i * window + j
                gx[:, i:i + stride * ho:stride, j:j + stride * wo:stride, :] += g * hit
        return (gx,)

    return make_result(best, (x,), bwd)


def avg_pool2d(x, window: int = 2, stride: int | None = None) -> DiffTensor:
    x = as_tensor(x)
    stride = stride or window
    ho, wo = _pool_windows(x.data, window, stride)
    out = np.zeros((x.shape[0], ho, wo, x.shape[3]), dtype=x.dtype)
    for i in range(window):
        for j in range(window):
            out += x.data[:, i:i + stride * ho:stride, j:j + stride * wo:stride, :]
    scale = x.dtype.type(1.0 / (window * window))

    def bwd(g):
        gx = np.zeros_like(x.data)
        for i in range(window):
            for j in range(window):
                gx[:, i:i + stride * ho:stride, j:j + stride * wo:stride, :] += g * scale
        return (gx,)

    return make_result(out * scale, (x,), bwd)


def global_avg_pool(x) -> DiffTensor:
    """[B, H, W, C] -> [B, C]."""
    return ops.mean(as_tensor(x), axis=(1, 2))


def pool(x, kind: str, window: int = 2, stride: int | None = None) -> DiffTensor:
    if kind == "max":
        return max_pool2d(x, window, stride)
    if kind == "avg":
        return avg_pool2d(x, window, stride)
    if kind == "global_avg":
        return global_avg_pool(x)
    raise ContractError(f"unknown pool kind {kind!r}")


def upsample_nearest(x, factor: int = 2) -> DiffTensor:
    x = as_tensor(x)
    if factor < 1:
        raise ContractError("upsample factor must be >= 1")
    if factor == 1:
        return x
    b, h, w, c = x.shape
    out = np.repeat(np.repeat(x.data, factor, axis=1), factor, axis=2)

    def bwd(g):
        return (g.reshape(b, h, factor, w, factor, c).sum(axis=(2, 4)),)

    return make_result(out, (x,), bwd)
