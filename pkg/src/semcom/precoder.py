"""Linear and learnable MU-MIMO precoding.

Complex matrices are inverted through their real embedding
``[[A_r, -A_i], [A_i, A_r]]`` by Gauss-Jordan elimination with partial
pivoting; the embedding of the inverse is the inverse of the embedding.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import DiffTensor, ops
from .autodiff.cplx import CTensor
from .autodiff.tensor import make_result
from .grid import power_normalize, power_normalize_t
from .nn import Conv2D, Module

PIVOT_TOL = 1e-12


class SingularMatrixError(np.linalg.LinAlgError):
    def __init__(self, index, pivot):
        super().__init__(f"matrix slice {index} is singular (pivot {pivot:.3g} < {PIVOT_TOL:g})")
        self.index = index
        self.pivot = pivot


def gauss_jordan_inverse(a: np.ndarray, tol: float = PIVOT_TOL) -> np.ndarray:
    """Batched inverse of real [..., n, n] matrices with partial pivoting."""
    a = np.asarray(a)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError(f"expected square matrices, got shape {a.shape}")
    batch_shape, n = a.shape[:-2], a.shape[-1]
    dtype = a.dtype if np.issubdtype(a.dtype, np.floating) else np.float64
    flat = a.reshape(-1, n, n)
    eye = np.broadcast_to(np.eye(n), flat.shape)
    m = np.concatenate([flat, eye], axis=2).astype(dtype)
    rows = np.arange(m.shape[0])
    for c in range(n):
        p = np.argmax(np.abs(m[:, c:, c]), axis=1) + c
        piv = m[rows, p, c]
        small = ~(np.abs(piv) >= tol)
        if small.any():
            first = int(np.flatnonzero(small)[0])
            raise SingularMatrixError(tuple(int(i) for i in np.unravel_index(first, batch_shape)),
                                      float(abs(piv[first])))
        top = m[rows, c].copy()
        m[rows, c] = m[rows, p]
        m[rows, p] = top
        m[:, c] /= piv[:, None]
        factors = m[:, :, c].copy()
        factors[:, c] = 0
        m -= factors[:, :, None] * m[:, c][:, None, :]
    return m[:, :, n:].reshape(a.shape)


def complex_embed(a: np.ndarray) -> np.ndarray:
    top = np.concatenate([a.real, -a.imag], axis=-1)
    bottom = np.concatenate([a.imag, a.real], axis=-1)
    return np.concatenate([top, bottom], axis=-2)


def batched_cinv(a: np.ndarray, tol: float = PIVOT_TOL) -> np.ndarray:
    """Inverse of each complex [..., n, n] slice."""
    a = np.asarray(a)
    n = a.shape[-1]
    dtype = np.float32 if a.dtype == np.complex64 else np.float64
    b = gauss_jordan_inverse(complex_embed(a).astype(dtype), tol)
    return (b[..., :n, :n] + 1j * b[..., n:, :n]).astype(a.dtype if np.iscomplexobj(a) else np.complex128)


def inverse_t(a: DiffTensor) -> DiffTensor:
    """Differentiable batched real inverse; d(A^-1) = -A^-1 dA A^-1."""
    a = ad.as_tensor(a)
    b = gauss_jordan_inverse(a.data)

    def bwd(g):
        bt = np.swapaxes(b, -1, -2)
        return (-(bt @ g @ bt),)

    return make_result(b, (a,), bwd)


def _gram(h: np.ndarray) -> np.ndarray:
    return h @ np.conj(np.swapaxes(h, -1, -2))


def rzf_matrix(h: np.ndarray, alpha: float, noise_var=1.0) -> np.ndarray:
    """V = H^H (H H^H + alpha sigma^2 I)^-1 for each [..., N_k, N_m] slice.

    ``noise_var`` broadcasts against the batch dims of ``h``.
    """
    h = np.asarray(h)
    n_k, n_m = h.shape[-2:]
    if n_k > n_m:
        raise ValueError(f"need N_k <= N_m, got {n_k} > {n_m}")
    reg = np.asarray(alpha * np.asarray(noise_var), dtype=float)[..., None, None]
    a = _gram(h) + reg * np.eye(n_k)
    return np.conj(np.swapaxes(h, -1, -2)) @ batched_cinv(a)


def apply_precoder(v: np.ndarray, s: np.ndarray) -> np.ndarray:
    """x = V s per RE: V [..., N_m, N_k], s [..., N_k] -> [..., N_m]."""
    return np.einsum("...mk,...k->...m", v, s)


def zf_precode(s: np.ndarray, h: np.ndarray, power: float | None = 1.0) -> np.ndarray:
    """Zero-forcing; ``power=None`` skips the final normalization."""
    x = apply_precoder(rzf_matrix(h, 0.0), s)
    return x if power is None else power_normalize(x, power)


def rzf_precode(s: np.ndarray, h: np.ndarray, alpha: float, noise_var, power: float | None = 1.0) -> np.ndarray:
    nv = np.asarray(noise_var, dtype=float)
    nv = nv.reshape(nv.shape + (1,) * (h.ndim - 2 - nv.ndim)) if nv.ndim else nv
    x = apply_precoder(rzf_matrix(h, alpha, nv), s)
    return x if power is None else power_normalize(x, power)


def _expand(values, ndim: int):
    values = np.asarray(values, dtype=float)
    return values.reshape(values.shape + (1,) * (ndim - values.ndim))


def rzf_apply_t(s: CTensor, h: np.ndarray, reg) -> CTensor:
    """Differentiable coarse precoding V s with regularizer ``reg`` = alpha sigma^2.

    ``s`` is [B, N_f, N_t, N_k], ``h`` complex [B, N_f, N_t, N_k, N_m],
    ``reg`` a DiffTensor or array broadcastable to [B]. ``reg`` = 0 gives ZF.
    """
    dtype = s.re.dtype
    n_k = h.shape[-2]
    gram = complex_embed(_gram(h)).astype(dtype)                             # [B,F,T,2K,2K]
    eye = np.eye(2 * n_k, dtype=dtype)
    if isinstance(reg, DiffTensor):
        reg_b = reg.reshape(reg.shape + (1,) * (gram.ndim - reg.ndim))
        a = ops.add(ops.mul(reg_b, eye), gram)
    else:
        a = ad.as_tensor((gram + _expand(reg, gram.ndim) * eye).astype(dtype))
    b = inverse_t(a)
    s_emb = ops.reshape(ops.concat([s.re, s.im], axis=-1), s.re.shape[:-1] + (2 * n_k, 1))
    u = ops.matmul(b, s_emb)                                                  # Re/Im of (HH^H+reg)^-1 s
    hh = complex_embed(np.conj(np.swapaxes(h, -1, -2))).astype(dtype)       # [B,F,T,2M,2K]
    x = ops.matmul(hh, u)                                                     # [B,F,T,2M,1]
    n_m = h.shape[-1]
    x = ops.reshape(x, x.shape[:-2] + (2 * n_m,))
    return CTensor(ops.take(x, range(n_m), -1), ops.take(x, range(n_m, 2 * n_m), -1))


class NeuralPrecoder(Module):
    """Learnable-regularizer RZF plus a convolutional residual correction.

    The residual net sees [coarse X (2 N_m) | H (2 N_k N_m)] as channels over
    the (frequency, time) plane and predicts a correction for X. Its last
    layer starts at zero, so an untrained precoder is exactly RZF with
    softplus(alpha) = 1.
    """

    def __init__(self, n_k: int, n_m: int, rng=None, hidden: int = 64, residual: bool = True,
                 learn_alpha: bool = True):
        super().__init__()
        rng = np.random.default_rng(rng)
        self.n_k, self.n_m = n_k, n_m
        self.residual, self.learn_alpha = residual, learn_alpha
        # softplus(log(e - 1)) == 1
        alpha0 = np.array(np.log(np.e - 1.0), dtype=np.float32)
        if learn_alpha:
            self._params["alpha"] = ad.parameter(alpha0)
        else:
            self._fixed_alpha = ad.DiffTensor(alpha0)
        if residual:
            cin = 2 * n_m + 2 * n_k * n_m
            self.conv1 = Conv2D(rng, cin, hidden, 3, bn=True, act="relu")
            self.conv2 = Conv2D(rng, hidden, hidden, 3, bn=True, act="relu")
            self.out = Conv2D(rng, hidden, 2 * n_m, 1, zero_init=True)

    @property
    def alpha_raw(self) -> DiffTensor:
        return self._params["alpha"] if self.learn_alpha else self._fixed_alpha

    def alpha(self) -> float:
        return float(ops.softplus(ad.DiffTensor(self.alpha_raw.data)).data)

    def __call__(self, s: CTensor, h: np.ndarray, noise_var, power: float = 1.0,
                 train: bool = True) -> CTensor:
        nv = np.asarray(noise_var, dtype=s.re.dtype).reshape(-1)
        reg = ops.mul(ops.softplus(self.alpha_raw), nv)                     # [B]
        coarse = rzf_apply_t(s, h, reg)
        x = coarse
        if self.residual:
            hf = h.reshape(h.shape[:3] + (-1,))
            feats = ops.concat([coarse.re, coarse.im,
                                np.ascontiguousarray(hf.real, dtype=s.re.dtype),
                                np.ascontiguousarray(hf.imag, dtype=s.re.dtype)], axis=-1)
            dx = self.out(self.conv2(self.conv1(feats, train), train), train)
            x = CTensor(ops.add(coarse.re, ops.take(dx, range(self.n_m), -1)),
                        ops.add(coarse.im, ops.take(dx, range(self.n_m, 2 * self.n_m), -1)))
        return power_normalize_t(x, power)


def neural_residual_precode(s: CTensor, h: np.ndarray, noise_var, params: NeuralPrecoder,
                            power: float = 1.0, train: bool = True) -> CTensor:
    return params(s, h, noise_var, power, train)


def zf_precode_t(s: CTensor, h: np.ndarray, power: float = 1.0) -> CTensor:
    """In-graph zero forcing. Singular slices raise :class:`SingularMatrixError`."""
    return power_normalize_t(rzf_apply_t(s, h, np.zeros(h.shape[0])), power)


def rzf_precode_t(s: CTensor, h: np.ndarray, noise_var, alpha: float = 1.0, power: float = 1.0) -> CTensor:
    """In-graph RZF with a fixed regularizer alpha sigma^2."""
    return power_normalize_t(rzf_apply_t(s, h, alpha * np.asarray(noise_var, dtype=float).reshape(-1)), power)
