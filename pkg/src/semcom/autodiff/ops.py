"""Elementwise, reduction and shape operations with their adjoints."""

from __future__ import annotations

import builtins

import numpy as np

from .tensor import ContractError, DiffTensor, DimensionError, as_tensor, make_result


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _lift(a, b):
    a_const, b_const = not isinstance(a, DiffTensor), not isinstance(b, DiffTensor)
    a = as_tensor(a)
    b = as_tensor(b)
    # python/numpy scalar constants follow the dtype of the tensor operand
    if a_const and not b_const and a.dtype != b.dtype and a.data.ndim == 0:
        a = DiffTensor(a.data.astype(b.dtype))
    if b_const and not a_const and a.dtype != b.dtype and b.data.ndim == 0:
        b = DiffTensor(b.data.astype(a.dtype))
    return a, b


def add(a, b) -> DiffTensor:
    a, b = _lift(a, b)

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return make_result(a.data + b.data, (a, b), bwd)


def sub(a, b) -> DiffTensor:
    a, b = _lift(a, b)

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return make_result(a.data - b.data, (a, b), bwd)


def mul(a, b) -> DiffTensor:
    a, b = _lift(a, b)

    def bwd(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return make_result(a.data * b.data, (a, b), bwd)


def div(a, b) -> DiffTensor:
    a, b = _lift(a, b)
    out = a.data / b.data

    def bwd(g):
        ga = _unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * out / b.data, b.shape) if b.requires_grad else None
        return ga, gb

    return make_result(out, (a, b), bwd)


def neg(a) -> DiffTensor:
    a = as_tensor(a)
    return make_result(-a.data, (a,), lambda g: (-g,))


def square(a) -> DiffTensor:
    a = as_tensor(a)
    return make_result(a.data * a.data, (a,), lambda g: (2 * g * a.data,))


def sqrt(a) -> DiffTensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return make_result(out, (a,), lambda g: (g / (2 * out),))


def exp(a) -> DiffTensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return make_result(out, (a,), lambda g: (g * out,))


def log(a) -> DiffTensor:
    a = as_tensor(a)
    return make_result(np.log(a.data), (a,), lambda g: (g / a.data,))


def relu(a) -> DiffTensor:
    a = as_tensor(a)
    mask = a.data > 0
    return make_result(np.where(mask, a.data, 0).astype(a.dtype), (a,), lambda g: (g * mask,))


def sigmoid(a) -> DiffTensor:
    a = as_tensor(a)
    x = a.data
    # split by sign so exp never overflows
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1 / (1 + e), e / (1 + e)).astype(a.dtype)
    return make_result(out, (a,), lambda g: (g * out * (1 - out),))


def tanh(a) -> DiffTensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return make_result(out, (a,), lambda g: (g * (1 - out * out),))


def softplus(a) -> DiffTensor:
    a = as_tensor(a)
    x = a.data
    out = (np.maximum(x, 0) + np.log1p(np.exp(-np.abs(x)))).astype(a.dtype)
    e = np.exp(-np.abs(x))
    slope = np.where(x >= 0, 1 / (1 + e), e / (1 + e)).astype(a.dtype)
    return make_result(out, (a,), lambda g: (g * slope,))


def activation(a, kind: str) -> DiffTensor:
    fn = {"relu": relu, "sigmoid": sigmoid, "tanh": tanh, "linear": lambda t: t}.get(kind)
    if fn is None:
        raise ContractError(f"unknown activation {kind!r}")
    return fn(a)


def matmul(a, b) -> DiffTensor:
    a, b = _lift(a, b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError("matmul needs operands with at least 2 dims")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner dims differ: {a.shape} @ {b.shape}")

    def bwd(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape)
        if b.requires_grad:
            gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
        return ga, gb

    return make_result(a.data @ b.data, (a, b), bwd)


def sum(a, axis=None, keepdims=False) -> DiffTensor:  # noqa: A001
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).astype(a.dtype, copy=True),)

    return make_result(np.asarray(out), (a,), bwd)


def mean(a, axis=None, keepdims=False) -> DiffTensor:
    a = as_tensor(a)
    if axis is None:
        n = a.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        n = int(np.prod([a.shape[ax] for ax in axes]))
    return mul(sum(a, axis=axis, keepdims=keepdims), np.asarray(1.0 / n, dtype=a.dtype))


def reshape(a, shape) -> DiffTensor:
    a = as_tensor(a)
    return make_result(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes=None) -> DiffTensor:
    a = as_tensor(a)
    axes = tuple(range(a.ndim))[::-1] if axes is None else tuple(axes)
    inv = np.argsort(axes)
    return make_result(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),))


def getitem(a, index) -> DiffTensor:
    a = as_tensor(a)
    basic = all(isinstance(i, (slice, int, type(None), type(Ellipsis)))
                for i in (index if isinstance(index, tuple) else (index,)))

    def bwd(g):
        full = np.zeros_like(a.data)
        if basic:
            full[index] = g
        else:
            np.add.at(full, index, g)
        return (full,)

    return make_result(a.data[index], (a,), bwd)


def take(a, indices, axis: int) -> DiffTensor:
    """Gather positions ``indices`` (distinct) along ``axis``."""
    a = as_tensor(a)
    idx = np.asarray(indices, dtype=np.intp)
    axis = axis % a.ndim

    def bwd(g):
        full = np.zeros_like(a.data)
        sl = [builtins.slice(None)] * a.ndim
        sl[axis] = idx
        full[tuple(sl)] = g
        return (full,)

    return make_result(np.take(a.data, idx, axis=axis), (a,), bwd)


def place(a, indices, axis: int, size: int) -> DiffTensor:
    """Inverse of :func:`take`: scatter ``a`` into a zero tensor of length ``size``."""
    a = as_tensor(a)
    idx = np.asarray(indices, dtype=np.intp)
    axis = axis % a.ndim
    if a.shape[axis] != len(idx):
        raise DimensionError(f"place: axis {axis} has {a.shape[axis]} entries, {len(idx)} indices")
    shape = list(a.shape)
    shape[axis] = size
    out = np.zeros(shape, dtype=a.dtype)
    sl = [builtins.slice(None)] * a.ndim
    sl[axis] = idx
    out[tuple(sl)] = a.data
    return make_result(out, (a,), lambda g: (np.take(g, idx, axis=axis),))


def concat(tensors, axis: int = -1) -> DiffTensor:
    ts = [as_tensor(t) for t in tensors]
    axis = axis % ts[0].ndim
    bounds = np.cumsum([0] + [t.shape[axis] for t in ts])

    def bwd(g):
        out = []
        for i in range(len(ts)):
            sl = [builtins.slice(None)] * g.ndim
            sl[axis] = builtins.slice(bounds[i], bounds[i + 1])
            out.append(g[tuple(sl)])
        return out

    return make_result(np.concatenate([t.data for t in ts], axis=axis), ts, bwd)


def stack(tensors, axis: int = 0) -> DiffTensor:
    ts = [as_tensor(t) for t in tensors]
    axis = axis % (ts[0].ndim + 1)

    def bwd(g):
        return [np.take(g, i, axis=axis) for i in range(len(ts))]

    return make_result(np.stack([t.data for t in ts], axis=axis), ts, bwd)


def mse(pred, target) -> DiffTensor:
    pred = as_tensor(pred)
    target = as_tensor(target)
    if pred.shape != target.shape:
        raise DimensionError(f"mse shapes differ: {pred.shape} vs {target.shape}")
    return mean(square(sub(pred, target)))


def cross_entropy(logits, labels) -> DiffTensor:
    """Batch-mean softmax cross-entropy from raw logits [B, K] and int labels [B]."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.intp)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise DimensionError(f"cross_entropy: logits {logits.shape}, labels {labels.shape}")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    rows = np.arange(len(labels))
    loss = -logp[rows, labels].mean()

    def bwd(g):
        p = np.exp(logp)
        p[rows, labels] -= 1
        return (g * p / len(labels),)

    return make_result(np.asarray(loss, dtype=logits.dtype), (logits,), bwd)
