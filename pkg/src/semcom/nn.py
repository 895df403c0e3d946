"""Small parameter-holding building blocks on top of the autodiff layers."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import DiffTensor, RunningStats, parameter


def he_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(np.float32)


class Module:
    """Parameters live in ``self._params``; child modules are found by attribute."""

    def __init__(self):
        self._params: dict[str, DiffTensor] = {}
        self._stats: dict[str, RunningStats] = {}

    def _children(self):
        for name, val in vars(self).items():
            if isinstance(val, Module):
                yield name, val
            elif isinstance(val, (list, tuple)):
                for i, v in enumerate(val):
                    if isinstance(v, Module):
                        yield f"{name}.{i}", v

    def parameters(self, prefix: str = "") -> dict[str, DiffTensor]:
        out = {prefix + k: v for k, v in self._params.items()}
        for name, child in self._children():
            out.update(child.parameters(f"{prefix}{name}."))
        return out

    def running_stats(self, prefix: str = "") -> dict[str, RunningStats]:
        out = {prefix + k: v for k, v in self._stats.items()}
        for name, child in self._children():
            out.update(child.running_stats(f"{prefix}{name}."))
        return out

    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters().values())


class Conv2D(Module):
    def __init__(self, rng, cin: int, cout: int, k: int | tuple = 3, stride: int = 1,
                 bn: bool = False, act: str = "linear", zero_init: bool = False):
        super().__init__()
        self.stride, self.act, self.bn = stride, act, bn
        kh, kw = (k, k) if isinstance(k, int) else k
        shape = (kh, kw, cin, cout)
        w = np.zeros(shape, np.float32) if zero_init else he_uniform(rng, shape, kh * kw * cin)
        self._params["kernel"] = parameter(w)
        if bn:
            self._params["gamma"] = parameter(np.ones(cout))
            self._params["beta"] = parameter(np.zeros(cout))
            self._stats["bn"] = RunningStats.fresh(cout)
        else:
            self._params["bias"] = parameter(np.zeros(cout))

    def __call__(self, x, train: bool = True) -> DiffTensor:
        p = self._params
        y = ad.conv2d(x, p["kernel"], self.stride)
        if self.bn:
            y = ad.batch_norm(y, p["gamma"], p["beta"], self._stats["bn"], "train" if train else "infer")
        else:
            y = y + p["bias"]
        return ad.activation(y, self.act)


class SepConv2D(Module):
    def __init__(self, rng, cin: int, cout: int, k: int = 3, stride: int = 1,
                 bn: bool = False, act: str = "linear", zero_init: bool = False):
        super().__init__()
        self.stride, self.act, self.bn = stride, act, bn
        self._params["depthwise"] = parameter(he_uniform(rng, (k, k, cin), k * k))
        pw = np.zeros((1, 1, cin, cout), np.float32) if zero_init else he_uniform(rng, (1, 1, cin, cout), cin)
        self._params["pointwise"] = parameter(pw)
        if bn:
            self._params["gamma"] = parameter(np.ones(cout))
            self._params["beta"] = parameter(np.zeros(cout))
            self._stats["bn"] = RunningStats.fresh(cout)
        else:
            self._params["bias"] = parameter(np.zeros(cout))

    def __call__(self, x, train: bool = True) -> DiffTensor:
        p = self._params
        y = ad.depthwise_separable_conv2d(x, p["depthwise"], p["pointwise"], self.stride)
        if self.bn:
            y = ad.batch_norm(y, p["gamma"], p["beta"], self._stats["bn"], "train" if train else "infer")
        else:
            y = y + p["bias"]
        return ad.activation(y, self.act)


class Dense(Module):
    def __init__(self, rng, n_in: int, n_out: int, act: str = "linear", zero_init: bool = False):
        super().__init__()
        self.act = act
        w = np.zeros((n_in, n_out), np.float32) if zero_init else he_uniform(rng, (n_in, n_out), n_in)
        self._params["weights"] = parameter(w)
        self._params["bias"] = parameter(np.zeros(n_out))

    def __call__(self, x, train: bool = True) -> DiffTensor:
        return ad.activation(ad.dense(x, self._params["weights"], self._params["bias"]), self.act)
