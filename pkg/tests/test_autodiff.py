import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from semcom import autodiff as ad
from semcom.autodiff import (AdamState, ContractError, DiffTensor, DimensionError,
                             NonFiniteGradientError, RunningStats, Tape, adam_step, ops)


def grad_of(fn, *arrays):
    """Gradients of scalar fn(*tensors) w.r.t. each input array."""
    ts = [DiffTensor(np.asarray(a, dtype=np.float64), requires_grad=True) for a in arrays]
    with Tape() as tape:
        out = fn(*ts)
        g = tape.backward(out)
    return [g.get(t.node_id, np.zeros_like(t.data)) for t in ts]


def loop_conv(x, k, stride=1):
    """Nested-loop 'same' convolution oracle (cross-correlation, zero padding)."""
    b, h, w, cin = x.shape
    kh, kw, _, cout = k.shape
    ho, wo = -(-h // stride), -(-w // stride)
    th = max((ho - 1) * stride + kh - h, 0)
    tw = max((wo - 1) * stride + kw - w, 0)
    xp = np.zeros((b, h + th, w + tw, cin))
    xp[:, th // 2:th // 2 + h, tw // 2:tw // 2 + w] = x
    out = np.zeros((b, ho, wo, cout))
    for n in range(b):
        for i in range(ho):
            for j in range(wo):
                for o in range(cout):
                    out[n, i, j, o] = np.sum(xp[n, i * stride:i * stride + kh, j * stride:j * stride + kw] * k[..., o])
    return out


# conv2d ----------------------------------------------------------------------------------

def test_conv_1x1_identity(rng):
    x = rng.standard_normal((2, 5, 5, 1)).astype(np.float32)
    np.testing.assert_array_equal(ad.conv2d(x, np.ones((1, 1, 1, 1))).data, x)


def test_conv_constant_field_interior():
    x = np.full((1, 6, 6, 1), 2.5)
    y = ad.conv2d(x, np.ones((3, 3, 1, 1))).data
    np.testing.assert_allclose(y[0, 1:-1, 1:-1, 0], 9 * 2.5)


@pytest.mark.parametrize("stride", [1, 2])
def test_conv_matches_loop_oracle(rng, stride):
    x = rng.standard_normal((1, 5, 5, 2))
    k = rng.standard_normal((3, 3, 2, 3))
    np.testing.assert_allclose(ad.conv2d(DiffTensor(x), DiffTensor(k), stride).data,
                               loop_conv(x, k, stride), rtol=1e-6, atol=1e-12)


def test_conv_valid_padding_shape(rng):
    y = ad.conv2d(rng.standard_normal((1, 7, 6, 2)), rng.standard_normal((3, 3, 2, 4)), padding="valid")
    assert y.shape == (1, 5, 4, 4)


def test_conv_channel_mismatch():
    with pytest.raises(DimensionError):
        ad.conv2d(np.zeros((1, 4, 4, 3)), np.zeros((3, 3, 2, 1)))


def test_conv_even_kernel_rejected():
    with pytest.raises(ContractError):
        ad.conv2d(np.zeros((1, 4, 4, 1)), np.zeros((2, 2, 1, 1)))


def test_stride_chain_32_16_8():
    x = np.zeros((1, 32, 32, 1))
    k = np.zeros((3, 3, 1, 1))
    assert ad.conv2d(ad.conv2d(x, k, 2), k, 2).shape == (1, 8, 8, 1)


# separable -------------------------------------------------------------------------------

def test_separable_identity(rng):
    x = rng.standard_normal((1, 4, 4, 3))
    dw = np.zeros((3, 3, 3))
    dw[1, 1] = 1
    pw = np.eye(3).reshape(1, 1, 3, 3)
    np.testing.assert_allclose(ad.depthwise_separable_conv2d(DiffTensor(x), DiffTensor(dw), DiffTensor(pw)).data, x)


def test_separable_equals_composed_conv(rng):
    x = rng.standard_normal((2, 6, 6, 3))
    dw = rng.standard_normal((3, 3, 3))
    pw = rng.standard_normal((1, 1, 3, 4))
    composed = dw[..., None] * pw[0, 0][None, None]          # [3, 3, Cin, Cout]
    got = ad.depthwise_separable_conv2d(DiffTensor(x), DiffTensor(dw), DiffTensor(pw)).data
    np.testing.assert_allclose(got, loop_conv(x, composed), rtol=1e-6, atol=1e-12)


def test_separable_parameter_count():
    from semcom.nn import SepConv2D
    m = SepConv2D(np.random.default_rng(0), 64, 64, 3)
    assert m._params["depthwise"].size + m._params["pointwise"].size == 576 + 4096 == 4672
    assert 3 * 3 * 64 * 64 == 36864


# dense -----------------------------------------------------------------------------------

def test_dense_identity_and_bias(rng):
    x = rng.standard_normal((3, 4)).astype(np.float32)
    np.testing.assert_array_equal(ad.dense(x, np.eye(4, dtype=np.float32), np.zeros(4, np.float32)).data, x)
    b = np.arange(4.0)
    np.testing.assert_array_equal(ad.dense(np.zeros((2, 3)), np.ones((3, 4)), b).data, np.tile(b, (2, 1)))


def test_dense_matches_naive(rng):
    x, w, b = rng.standard_normal((3, 5)), rng.standard_normal((5, 2)), rng.standard_normal(2)
    naive = np.array([[sum(x[i, k] * w[k, j] for k in range(5)) + b[j] for j in range(2)] for i in range(3)])
    np.testing.assert_allclose(ad.dense(DiffTensor(x), DiffTensor(w), DiffTensor(b)).data, naive, rtol=1e-6)


def test_dense_dimension_error():
    with pytest.raises(DimensionError):
        ad.dense(np.zeros((2, 3)), np.zeros((4, 2)))


# batch norm ------------------------------------------------------------------------------

def test_bn_constant_input_gives_beta():
    x = np.full((4, 3, 3, 2), 7.0)
    y = ad.batch_norm(x, np.array([2.0, 3.0]), np.array([0.5, -1.0]), mode="train").data
    np.testing.assert_allclose(y[..., 0], 0.5)
    np.testing.assert_allclose(y[..., 1], -1.0)


def test_bn_standardized_input_unchanged(rng):
    x = rng.standard_normal((64, 4, 4, 3))
    x = (x - x.mean(axis=(0, 1, 2))) / x.std(axis=(0, 1, 2))
    y = ad.batch_norm(DiffTensor(x), np.ones(3), np.zeros(3), mode="train").data
    assert np.abs(y - x).max() < 1e-3


def test_bn_infer_identity(rng):
    x = rng.standard_normal((2, 3, 3, 4)).astype(np.float32)
    stats = RunningStats(np.zeros(4, np.float32), np.ones(4, np.float32))
    y = ad.batch_norm(x, np.ones(4), np.zeros(4), stats, mode="infer").data
    np.testing.assert_allclose(y, x, rtol=1e-5)      # 1/sqrt(1 + eps)


def test_bn_running_stats_momentum(rng):
    x = rng.standard_normal((8, 2, 2, 1)) * 3 + 1
    stats = RunningStats.fresh(1)
    ad.batch_norm(x, np.ones(1), np.zeros(1), stats, mode="train")
    np.testing.assert_allclose(stats.mean, 0.1 * x.mean(), rtol=1e-5)


@given(hnp.arrays(np.float64, (3, 2, 2, 2), elements=st.floats(-1e6, 1e6)))
def test_bn_always_finite(x):
    y = ad.batch_norm(DiffTensor(x), np.ones(2), np.zeros(2), mode="train").data
    assert np.all(np.isfinite(y))


# activations, pooling, upsampling ---------------------------------------------------------

def test_activations():
    np.testing.assert_array_equal(ad.relu(np.array([-1.0, 2.0])).data, [0, 2])
    assert ad.sigmoid(np.array(0.0)).data == 0.5
    assert ad.tanh(np.array(0.0)).data == 0.0
    (g,) = grad_of(lambda t: ad.tanh(t), np.array(0.0))
    assert g == 1.0


def test_pool_examples():
    x = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 2, 2, 1)
    assert ad.max_pool2d(x, 2).data.item() == 4
    assert ad.avg_pool2d(x, 2).data.item() == 2.5


def test_pool_loop_oracle(rng):
    x = rng.standard_normal((2, 6, 4, 3))
    mx = np.zeros((2, 3, 2, 3))
    av = np.zeros_like(mx)
    for i in range(3):
        for j in range(2):
            win = x[:, 2 * i:2 * i + 2, 2 * j:2 * j + 2]
            mx[:, i, j] = win.max(axis=(1, 2))
            av[:, i, j] = win.mean(axis=(1, 2))
    np.testing.assert_allclose(ad.max_pool2d(DiffTensor(x), 2).data, mx)
    np.testing.assert_allclose(ad.avg_pool2d(DiffTensor(x), 2).data, av)
    np.testing.assert_allclose(ad.global_avg_pool(DiffTensor(x)).data, x.mean(axis=(1, 2)))


def test_max_pool_tie_goes_to_first_index():
    (g,) = grad_of(lambda t: ops.sum(ad.max_pool2d(t, 2)), np.ones((1, 2, 2, 1)))
    np.testing.assert_array_equal(g.reshape(-1), [1, 0, 0, 0])


def test_pool_window_too_large():
    with pytest.raises(DimensionError):
        ad.max_pool2d(np.zeros((1, 1, 1, 1)), 2)


def test_upsample():
    v = np.full((1, 1, 1, 1), 3.0)
    np.testing.assert_array_equal(ad.upsample_nearest(v, 2).data, np.full((1, 2, 2, 1), 3.0))
    x = np.arange(8.0).reshape(1, 2, 2, 2)
    np.testing.assert_array_equal(ad.upsample_nearest(x, 1).data, x)
    (g,) = grad_of(lambda t: ops.sum(ad.upsample_nearest(t, 3)), x)
    np.testing.assert_array_equal(g, np.full_like(x, 9.0))


# backward ----------------------------------------------------------------------------------

def test_backward_square():
    (g,) = grad_of(lambda t: ops.mul(t, t), np.array(3.0))
    assert g == 6.0


def test_backward_dense_sum(rng):
    x = rng.standard_normal((1, 4))
    _, gw = grad_of(lambda xt, wt: ops.sum(ad.dense(xt, wt)), x, rng.standard_normal((4, 3)))
    np.testing.assert_allclose(gw, np.repeat(x.T, 3, axis=1))


def test_backward_shared_node_accumulates():
    (g,) = grad_of(lambda t: ops.add(ops.mul(t, 2.0), ops.mul(t, t)), np.array(1.5))
    assert g == pytest.approx(2 + 3.0)


def test_backward_nonscalar_rejected():
    x = DiffTensor(np.ones(3), requires_grad=True)
    with Tape() as tape:
        y = ops.mul(x, 2.0)
        with pytest.raises(ContractError):
            tape.backward(y)


def test_backward_without_tape():
    with pytest.raises(ContractError):
        ad.backward(DiffTensor(np.array(1.0)))


def test_composite_against_finite_differences(rng):
    """conv2d -> relu -> dense -> MSE at h = 1e-3."""
    x = rng.standard_normal((2, 4, 4, 2))
    w2 = rng.standard_normal((4 * 4 * 3, 5))
    target = rng.standard_normal((2, 5))

    def f(k):
        h = ad.relu(ad.conv2d(DiffTensor(x), k))
        return ad.mse(ad.dense(ops.reshape(h, (2, -1)), DiffTensor(w2)), target)

    err = ad.finite_diff_check(f, rng.standard_normal((3, 3, 2, 3)), h=1e-3, n_coords=20)
    assert err < 1e-3


def test_forward_replay_bit_identical(rng):
    from semcom.nn import Conv2D
    x = rng.standard_normal((2, 8, 8, 3)).astype(np.float32)
    a = Conv2D(np.random.default_rng(7), 3, 4, 3, bn=True, act="relu")(x).data
    b = Conv2D(np.random.default_rng(7), 3, 4, 3, bn=True, act="relu")(x).data
    assert a.tobytes() == b.tobytes()


def test_default_dtype_float32():
    assert DiffTensor([1, 2]).dtype == np.float32
    assert ad.parameter(np.zeros(2, np.float64)).dtype == np.float32


# adam ---------------------------------------------------------------------------------------

def test_adam_zero_grad_no_change():
    p = {"w": np.array([1.0, -2.0])}
    adam_step(p, {"w": np.zeros(2)}, AdamState())
    np.testing.assert_array_equal(p["w"], [1.0, -2.0])


@given(hnp.arrays(np.float64, 5, elements=st.floats(1e-3, 1e3) | st.floats(-1e3, -1e-3)))
def test_adam_first_step_moves_by_lr(g):
    p = {"w": np.zeros(5)}
    adam_step(p, {"w": g}, AdamState(lr=1e-3))
    np.testing.assert_allclose(np.abs(p["w"]), 1e-3, rtol=1e-4)
    assert np.all(np.sign(p["w"]) == -np.sign(g))


def test_adam_two_steps_hand_recurrence():
    lr, b1, b2, eps, g = 0.01, 0.9, 0.999, 1e-8, 0.5
    p = {"w": np.array([1.0])}
    state = AdamState(lr=lr)
    adam_step(p, {"w": np.array([g])}, state)
    adam_step(p, {"w": np.array([g])}, state)
    w = 1.0
    m = v = 0.0
    for t in (1, 2):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        w -= lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
    assert p["w"][0] == pytest.approx(w, rel=1e-6)
    assert state.t == 2


def test_adam_rejects_nonfinite_without_mutation():
    p = {"a": np.array([1.0]), "b": np.array([2.0])}
    state = AdamState()
    with pytest.raises(NonFiniteGradientError):
        adam_step(p, {"a": np.array([0.1]), "b": np.array([np.nan])}, state)
    assert p["a"][0] == 1.0 and state.t == 0


def test_adam_shape_mismatch():
    with pytest.raises(ContractError):
        adam_step({"w": np.zeros(2)}, {"w": np.zeros(3)}, AdamState())


# finite difference checker --------------------------------------------------------------------

def test_fd_linear_and_quadratic(rng):
    a = rng.standard_normal(6)
    assert ad.finite_diff_check(lambda t: ops.sum(ops.mul(t, a)), rng.standard_normal(6)) < 1e-6
    assert ad.finite_diff_check(lambda t: ops.sum(ops.mul(t, t)), rng.standard_normal(6), h=1e-3) < 1e-4


def test_fd_detects_wrong_gradient(rng):
    from semcom.autodiff.tensor import make_result

    def bad_square(t):
        return make_result(t.data ** 2, (t,), lambda g: (g * t.data,))    # missing factor 2

    assert ad.finite_diff_check(lambda t: ops.sum(bad_square(t)), rng.standard_normal(4) + 2) > 0.4


def test_fd_full_encoder():
    from semcom.config import LinkConfig
    from semcom.models import Encoder
    link = LinkConfig(n_f=16)
    enc = Encoder(link, np.random.default_rng(0))
    r = np.random.default_rng(1)
    images = r.uniform(0, 1, (1, link.n_k, 32, 32, 3))
    csi = r.uniform(0.1, 2, (1, link.n_f))
    probe = r.standard_normal((1, link.n_sf, link.n_st, link.n_k, 2))
    errs = ad.check_parameter_gradients(lambda: ops.sum(ops.mul(enc(images, csi, np.array([0.1])), probe)),
                                        enc.parameters(), h=1e-7, n_coords=20, floor=1e-7)
    assert max(errs.values()) < 1e-3


def test_gradient_suite_all_layers_pass():
    from semcom.harness.gradsuite import _layer_cases
    errs = {name: fn() for name, fn in _layer_cases().items()}
    assert max(errs.values()) < 1e-3, errs
