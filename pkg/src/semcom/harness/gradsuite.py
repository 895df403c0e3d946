"""Finite-difference gradient suite: every layer type plus the end-to-end loss.

Each case returns the worst relative error between tape gradients and
central differences, measured in float64 (see ``autodiff.gradcheck``).
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .. import autodiff as ad
from .. import nn
from ..autodiff import cplx, ops
from ..autodiff.cplx import CTensor
from ..channel import complex_noise, sample_channels, snr_to_noise_var
from ..config import LinkConfig
from ..grid import power_normalize_t
from ..models import SemanticSystem, composite_loss
from ..precoder import inverse_t, rzf_apply_t

TOLERANCE = 1e-3
STEP = 1e-5
# a perturbation of one encoder weight moves ~1e5 ReLU/max-pool inputs; the
# chance that one crosses a kink grows with the step, so the end-to-end check
# needs a much smaller one (roundoff takes over below ~1e-8)
COMPOSED_STEP = 1e-7
FLOOR = 1e-7
COMPOSED_LINK = LinkConfig(n_f=16)


@dataclass(frozen=True)
class GradCase:
    name: str
    max_rel_err: float
    seconds: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_rel_err) and self.max_rel_err < TOLERANCE)


def _rng(seed):
    return np.random.default_rng(seed)


def _probe(y: ad.DiffTensor, seed: int = 99) -> ad.DiffTensor:
    """Scalar loss with a fixed random weighting so every output element matters."""
    w = _rng(seed).standard_normal(y.shape)
    return ops.sum(ops.mul(y, w))


def _input_check(fn, shape, seed=0, scale=1.0) -> float:
    x = _rng(seed).standard_normal(shape) * scale
    return ad.finite_diff_check(lambda t: _probe(fn(t)), x, h=STEP, floor=FLOOR)


def _module_check(module: nn.Module, x: np.ndarray, call=None) -> float:
    x = np.asarray(x, dtype=np.float64)
    call = call or (lambda m, t: m(t, train=True))
    errs = ad.check_parameter_gradients(lambda: _probe(call(module, ad.DiffTensor(x))),
                                        module.parameters(), h=STEP, n_coords=20, floor=FLOOR)
    inp = ad.finite_diff_check(lambda t: _probe(call(module, t)), x, h=STEP, floor=FLOOR)
    return max([inp, *errs.values()])


def _layer_cases() -> dict[str, Callable[[], float]]:
    r = _rng(1)
    img = r.standard_normal((2, 6, 6, 3))
    rand = r.standard_normal

    def kernel_fn(shape, op):
        k = rand(shape)
        return lambda: max(_input_check(lambda t: op(t, ad.DiffTensor(k)), img.shape),
                           ad.finite_diff_check(lambda kt: _probe(op(ad.DiffTensor(img), kt)), k,
                                                h=STEP, floor=FLOOR))

    def complex_inverse():
        a = rand((3, 4, 4)) + 4 * np.eye(4)
        return _input_check(lambda t: inverse_t(ops.add(t, a)), a.shape, scale=0.1)

    def rzf():
        h = (rand((2, 2, 3, 2, 4)) + 1j * rand((2, 2, 3, 2, 4))) / np.sqrt(2)
        s = rand((2, 2, 3, 2, 2))

        def f(t):
            x = rzf_apply_t(CTensor(ops.take(t, [0], -1).reshape(t.shape[:-1]),
                                    ops.take(t, [1], -1).reshape(t.shape[:-1])), h, np.array([0.3, 0.7]))
            return cplx.to_pairs(power_normalize_t(x))
        return ad.finite_diff_check(lambda t: _probe(f(t)), s, h=STEP, floor=FLOOR)

    def batch_norm():
        g, b = rand(3), rand(3)
        return max(_input_check(lambda t: ad.batch_norm(t, g, b, mode="train"), img.shape),
                   ad.finite_diff_check(lambda gt: _probe(ad.batch_norm(ad.DiffTensor(img), gt, b,
                                                                        mode="train")), g, h=STEP, floor=FLOOR))

    def cross_entropy():
        labels = np.array([0, 3, 9, 4])
        return ad.finite_diff_check(lambda t: ad.cross_entropy(t, labels), rand((4, 10)), h=STEP, floor=FLOOR)

    def mse():
        target = rand((2, 5))
        return ad.finite_diff_check(lambda t: ad.mse(t, target), rand((2, 5)), h=STEP, floor=FLOOR)

    return {
        "conv2d": kernel_fn((3, 3, 3, 4), lambda x, k: ad.conv2d(x, k)),
        "conv2d_stride2": kernel_fn((3, 3, 3, 4), lambda x, k: ad.conv2d(x, k, stride=2)),
        "conv2d_1x5": kernel_fn((1, 5, 3, 2), lambda x, k: ad.conv2d(x, k, stride=2)),
        "depthwise_conv2d": kernel_fn((3, 3, 3), lambda x, k: ad.depthwise_conv2d(x, k)),
        "separable_conv2d": lambda: _module_check(nn.SepConv2D(_rng(2), 3, 4, bn=True, act="relu"), img),
        "dense": lambda: _module_check(nn.Dense(_rng(3), 5, 4, act="tanh"), rand((3, 5))),
        "batch_norm": batch_norm,
        "max_pool2d": lambda: _input_check(lambda t: ad.max_pool2d(t, 2), img.shape),
        "avg_pool2d": lambda: _input_check(lambda t: ad.avg_pool2d(t, 2), img.shape),
        "global_avg_pool": lambda: _input_check(ad.global_avg_pool, img.shape),
        "upsample_nearest": lambda: _input_check(lambda t: ad.upsample_nearest(t, 2), img.shape),
        "relu": lambda: _input_check(ad.relu, (4, 7)),
        "sigmoid": lambda: _input_check(ad.sigmoid, (4, 7)),
        "tanh": lambda: _input_check(ad.tanh, (4, 7)),
        "softplus": lambda: _input_check(ad.softplus, (4, 7)),
        "cross_entropy": cross_entropy,
        "mse": mse,
        "matrix_inverse": complex_inverse,
        "rzf_precoder": rzf,
    }


def composed_check(seed: int, variant: str = "full", link: LinkConfig = COMPOSED_LINK,
                   n_coords: int = 24) -> float:
    """encoder -> precoder -> channel -> decoder -> composite loss, w.r.t. parameters."""
    rng = _rng([seed, 5])
    model = SemanticSystem(link, variant, seed)
    n = 2
    images = rng.uniform(0, 1, (n, link.n_k, 32, 32, 3))
    labels = rng.integers(0, 10, (n, link.n_k))
    h = sample_channels("UMi", n, link.n_f, link.n_t, link.n_k, link.n_m, link.subcarrier_spacing, rng)
    nv = snr_to_noise_var(rng.uniform(-7, 7, n), link.power / link.n_m)
    noise = complex_noise((n, link.n_f, link.n_t, link.n_k), nv[:, None, None, None], rng)

    def loss():
        recon, logits, _ = model(images, h, nv, noise, train=True)
        return composite_loss(recon, images, logits, labels)

    errs = ad.check_parameter_gradients(loss, model.parameters(), h=COMPOSED_STEP, n_coords=n_coords,
                                        seed=seed, floor=FLOOR)
    return max(errs.values())


def run_suite(seeds=(0, 1, 2)) -> list[GradCase]:
    cases = list(_layer_cases().items())
    cases += [(f"composed_seed{s}", lambda s=s: composed_check(s)) for s in seeds]
    out = []
    for name, fn in cases:
        t0 = time.perf_counter()
        err = float(fn())
        out.append(GradCase(name, err, time.perf_counter() - t0))
    return out
