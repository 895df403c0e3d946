"""Central finite-difference checks of tape gradients.

Checks run in float64: float32 rounding (eps ~ 6e-8) divided by a step of
1e-3 leaves ~1e-4 of noise on every difference quotient, which would swamp
the tolerance being checked. The graph is the same code path either way.
"""

from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

from .tensor import DiffTensor, Tape


def _rel_err(a: np.ndarray, b: np.ndarray, floor: float) -> np.ndarray:
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def _pick(size: int, n: int | None, rng: np.random.Generator) -> np.ndarray:
    if n is None or n >= size:
        return np.arange(size)
    return rng.choice(size, size=n, replace=False)


def finite_diff_check(fn: Callable[[DiffTensor], DiffTensor], point, h: float = 1e-3,
                      n_coords: int | None = 20, seed: int = 0, floor: float = 1e-8) -> float:
    """Max relative error between ``backward()`` and central differences.

    ``fn`` maps a tensor to a scalar tensor and must be deterministic.
    """
    point = np.asarray(point, dtype=np.float64)
    x = DiffTensor(point.copy(), requires_grad=True)
    with Tape() as tape:
        loss = fn(x)
        grads = tape.backward(loss)
    g_ad = grads.get(x.node_id, np.zeros_like(point)).reshape(-1)
    rng = np.random.default_rng(seed)
    idx = _pick(point.size, n_coords, rng)
    flat = point.reshape(-1)
    g_fd = np.empty(len(idx))
    for n, i in enumerate(idx):
        plus = flat.copy()
        plus[i] += h
        minus = flat.copy()
        minus[i] -= h
        fp = float(fn(DiffTensor(plus.reshape(point.shape))).data)
        fm = float(fn(DiffTensor(minus.reshape(point.shape))).data)
        g_fd[n] = (fp - fm) / (2 * h)
    return float(_rel_err(g_ad[idx], g_fd, floor).max())


def check_parameter_gradients(loss_fn: Callable[[], DiffTensor], params: dict[str, DiffTensor],
                              h: float = 1e-3, n_coords: int = 20, seed: int = 0,
                              floor: float = 1e-8, names: Iterable[str] | None = None) -> dict[str, float]:
    """Finite-difference check of gradients w.r.t. named parameters.

    Parameters are promoted to float64 for the duration of the check and
    restored afterwards. ``n_coords`` coordinates are sampled across all the
    selected parameters; returns the max relative error per parameter.
    """
    names = list(params) if names is None else list(names)
    saved = {k: p.data for k, p in params.items()}
    try:
        for p in params.values():
            p.data = p.data.astype(np.float64)
        with Tape() as tape:
            loss = loss_fn()
            grads = tape.backward(loss)
        rng = np.random.default_rng(seed)
        sizes = np.array([params[k].size for k in names])
        owners = rng.choice(len(names), size=n_coords, p=sizes / sizes.sum())
        errors: dict[str, float] = {}
        for o in owners:
            k = names[o]
            p = params[k]
            i = int(rng.integers(p.size))
            flat = p.data.reshape(-1)
            orig = flat[i]
            flat[i] = orig + h
            fp = float(loss_fn().data)
            flat[i] = orig - h
            fm = float(loss_fn().data)
            flat[i] = orig
            fd = (fp - fm) / (2 * h)
            ad = float(grads.get(p.node_id, np.zeros_like(p.data)).reshape(-1)[i])
            err = float(_rel_err(np.array(ad), np.array(fd), floor))
            errors[k] = max(errors.get(k, 0.0), err)
        return errors
    finally:
        for k, p in params.items():
            p.data = saved[k]
