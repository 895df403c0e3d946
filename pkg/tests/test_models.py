import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from semcom import autodiff as ad
from semcom.autodiff import DiffTensor, Tape, ops
from semcom.autodiff.cplx import CTensor
from semcom.channel import complex_noise, csi_magnitude, sample_channels
from semcom.config import LinkConfig
from semcom.grid import pilot_reference
from semcom.models import (Classification, Decoder, Encoder, NoiseAdaptation, PilotAttention, ResBlock,
                           Restoration, ScenarioAdaptation, SemanticSystem, VARIANTS, composite_loss,
                           pilot_guided_attention)

LINK = LinkConfig()
SMALL = LinkConfig(n_f=16)


def _inputs(r, link=LINK, b=2):
    images = r.uniform(0, 1, (b, link.n_k, 32, 32, 3))
    h = sample_channels("UMi", b, link.n_f, link.n_t, link.n_k, link.n_m, link.subcarrier_spacing, r)
    nv = np.full(b, 0.05)
    return images, h, nv


# building blocks ----------------------------------------------------------------------------

def test_resblock_zero_branch_is_relu(rng):
    block = ResBlock(rng, 8, 8, 1)
    for conv in (block.conv1, block.conv2):
        conv._params["kernel"].data[...] = 0
    x = rng.standard_normal((2, 6, 6, 8)).astype(np.float32)
    np.testing.assert_allclose(block(DiffTensor(x)).data, np.maximum(x, 0), atol=1e-6)


def test_resblock_stride_halves(rng):
    block = ResBlock(rng, 3, 8, 2)
    assert block(DiffTensor(rng.standard_normal((1, 32, 32, 3)))).shape == (1, 16, 16, 8)


def test_resblock_gradient(rng):
    block = ResBlock(rng, 3, 4, 2)
    x = rng.standard_normal((2, 6, 6, 3))
    w = rng.standard_normal((2, 3, 3, 4))
    errs = ad.check_parameter_gradients(lambda: ops.sum(ops.mul(block(DiffTensor(x)), w)),
                                        block.parameters(), h=1e-5, n_coords=30, floor=1e-7)
    assert max(errs.values()) < 1e-3


def test_noise_gate_zero_init_halves(rng):
    mod = NoiseAdaptation(rng, 8, zero_init=True)
    feats = rng.standard_normal((3, 2, 2, 8))
    np.testing.assert_allclose(mod(DiffTensor(feats), [0.1, 1.0, 10.0]).data, feats / 2, rtol=1e-6)


@given(st.floats(1e-12, 1e12))
def test_noise_gate_strictly_inside_unit_interval(nv):
    mod = NoiseAdaptation(np.random.default_rng(0), 128, center=-1.0, half_width=0.7)
    g = mod.gate([nv]).data
    assert np.all(g > 0) and np.all(g < 1)


def test_noise_gate_gradient_reaches_dense(rng):
    mod = NoiseAdaptation(rng, 8)
    feats = rng.standard_normal((2, 3, 3, 8))
    with Tape() as tape:
        loss = ops.sum(mod(DiffTensor(feats), [0.05, 0.5]))
        grads = tape.backward(loss)
    for p in mod.parameters().values():
        g = grads[p.node_id]
        assert np.all(np.isfinite(g)) and np.any(g != 0)


def test_noise_gate_rejects_nonpositive(rng):
    with pytest.raises(ValueError):
        NoiseAdaptation(rng, 4).gate([0.0])


def test_scenario_gate_flat_zero_init(rng):
    mod = ScenarioAdaptation(rng, 16, zero_init=True)
    np.testing.assert_allclose(mod.gate(np.ones((2, 32))).data, 0.5)


def test_scenario_gate_distinguishes_draws(rng):
    mod = ScenarioAdaptation(rng, 128)
    h = sample_channels("UMi", 2, 32, 1, 4, 4, rng=rng)
    g = mod.gate(csi_magnitude(h)).data
    assert np.all((g > 0) & (g < 1))
    assert np.abs(g[0] - g[1]).max() > 0


def test_scenario_gate_rejects_negative(rng):
    with pytest.raises(ValueError):
        ScenarioAdaptation(rng).gate(-np.ones((1, 32)))


def test_encoder_shape_range_determinism(rng):
    images, h, nv = _inputs(rng)
    out = [Encoder(LINK, rng=3)(images, csi_magnitude(h), nv).data for _ in range(2)]
    assert out[0].shape == (2, 32, 12, 4, 2)
    assert np.all(np.abs(out[0]) < 1)
    np.testing.assert_array_equal(out[0], out[1])


def test_encoder_rejects_wrong_image_shape(rng):
    with pytest.raises(ValueError):
        Encoder(LINK, rng=0)(np.zeros((1, 3, 32, 32, 3)), np.ones((1, 32)), [0.1])


def test_attention_zero_init_halves(rng):
    mod = PilotAttention(rng, hidden=8)
    y = rng.standard_normal((2, 32, 14, 2))
    yp = rng.standard_normal((2, 32, 14, 2))
    np.testing.assert_allclose(mod(DiffTensor(y), yp).data, 0.5)
    out = pilot_guided_attention(DiffTensor(y), yp, mod, LINK.data_symbols).data
    assert out.shape == (2, 32, 12, 4)
    cols = list(LINK.data_symbols)
    np.testing.assert_allclose(out[..., :2], y[:, :, cols] / 2, rtol=1e-6)
    np.testing.assert_array_equal(out[..., 2:], yp[:, :, cols])


def test_attention_map_in_unit_interval(rng):
    mod = PilotAttention(rng, hidden=8)
    mod.out._params["pointwise"].data[...] = rng.standard_normal(mod.out._params["pointwise"].shape) * 3
    m = mod(DiffTensor(rng.standard_normal((2, 32, 14, 2)) * 5), rng.standard_normal((2, 32, 14, 2))).data
    assert np.all((m > 0) & (m < 1))


def test_attention_shape_mismatch(rng):
    with pytest.raises(ValueError):
        pilot_guided_attention(DiffTensor(np.zeros((1, 32, 14, 2))), np.zeros((1, 32, 13, 2)),
                               PilotAttention(rng, 4), LINK.data_symbols)


def test_noiseless_identity_channel_returns_pilots():
    # zero-forcing over H = I sends the pilot grid through untouched apart from the power scale
    model = SemanticSystem(LINK, "zf_in_loop", seed=0)
    r = np.random.default_rng(0)
    images = r.uniform(0, 1, (1, 4, 32, 32, 3))
    h = np.broadcast_to(np.eye(4, dtype=complex), (1, 32, 14, 4, 4))
    y = model.transmit(images, h, [0.1], train=False).numpy()[0]
    yp = pilot_reference(LINK)
    cols = list(LINK.pilot_symbols)
    scale = np.vdot(yp[:, cols], y[:, cols]) / np.vdot(yp[:, cols], yp[:, cols])
    assert abs(scale.imag) < 1e-6 and scale.real > 0
    np.testing.assert_allclose(y[:, cols], scale * yp[:, cols], atol=1e-5)


def test_restoration_contract(rng):
    mod = Restoration(rng, 24)
    x = DiffTensor(rng.standard_normal((3, 8, 8, 24)))
    out = mod(x).data
    assert out.shape == (3, 32, 32, 3) and np.all((out > 0) & (out < 1))
    mod.out._params["kernel"].data[...] = 0
    np.testing.assert_allclose(mod(x).data, 0.5)


def test_restoration_gradient(rng):
    mod = Restoration(rng, 4)
    x = rng.standard_normal((2, 8, 8, 4))
    target = rng.uniform(0, 1, (2, 32, 32, 3))
    errs = ad.check_parameter_gradients(lambda: ops.mse(mod(DiffTensor(x)), target), mod.parameters(),
                                        h=1e-5, n_coords=30, floor=1e-7)
    assert max(errs.values()) < 1e-3


def test_classification_shape_and_gradient(rng):
    mod = Classification(rng, 4)
    x = rng.standard_normal((3, 8, 8, 4))
    assert mod(DiffTensor(x)).shape == (3, 10)
    labels = np.array([1, 5, 9])
    errs = ad.check_parameter_gradients(lambda: ops.cross_entropy(mod(DiffTensor(x)), labels),
                                        mod.parameters(), h=1e-5, n_coords=30, floor=1e-7)
    assert max(errs.values()) < 1e-3


def test_zero_init_classifier_is_chance(rng):
    mod = Classification(rng, 4)
    mod.out._params["weights"].data[...] = 0
    x = DiffTensor(rng.standard_normal((100, 8, 8, 4)))
    logits = mod(x).data
    np.testing.assert_allclose(logits, logits[:1].repeat(100, 0))
    labels = np.arange(100) % 10
    assert np.mean(logits.argmax(1) == labels) == pytest.approx(0.1)


def test_untrained_system_near_chance():
    r = np.random.default_rng(7)
    model = SemanticSystem(SMALL, "full", seed=1)
    correct = total = 0
    for _ in range(4):
        images, h, nv = _inputs(r, SMALL, b=16)
        labels = r.integers(0, 10, (16, 4))
        _, logits, _ = model(images, h, nv, train=False)
        correct += int((logits.data.argmax(-1) == labels).sum())
        total += labels.size
    assert abs(correct / total - 0.1) <= 0.05


# loss ---------------------------------------------------------------------------------------

def test_loss_perfect_prediction():
    s = np.random.default_rng(0).uniform(0, 1, (2, 4, 4, 3))
    logits = np.zeros((2, 10))
    logits[[0, 1], [3, 7]] = 20
    assert composite_loss(s, s, logits, [3, 7]).data < 1e-6


def test_loss_lambda_zero_is_mse(rng):
    a, b = rng.uniform(0, 1, (2, 3, 5, 5, 3))
    logits = rng.standard_normal((3, 10))
    got = composite_loss(a, b, logits, [0, 1, 2], lam=0.0).data
    assert got == np.mean((a - b) ** 2)


def test_loss_hand_two_samples():
    recon = np.array([[0.5, 0.0], [1.0, 1.0]])
    images = np.array([[0.0, 0.0], [1.0, 0.0]])
    logits = np.array([[1.0, 2.0, 3.0], [0.0, 0.0, 0.0]])
    mse = (0.25 + 0 + 0 + 1) / 4
    ce = (math.log(math.e + math.e ** 2 + math.e ** 3) - 3 + math.log(3)) / 2
    got = composite_loss(recon, images, logits, [2, 1], lam=0.1).data
    assert abs(got - (mse + 0.1 * ce)) / (mse + 0.1 * ce) < 1e-6
    scaled = composite_loss(recon, images, logits, [2, 1], lam=0.1, recon_scale=3.0).data
    assert abs(scaled - (3 * mse + 0.1 * ce)) / (3 * mse + 0.1 * ce) < 1e-6


def test_loss_rejects_bad_weights():
    z = np.zeros((1, 2))
    with pytest.raises(ValueError):
        composite_loss(z, z, z, [0], lam=-1)
    with pytest.raises(ValueError):
        composite_loss(z, z, z, [0], recon_scale=0)


# whole system -------------------------------------------------------------------------------

def test_parameter_asymmetry():
    model = SemanticSystem(LINK, "full", seed=0)
    n_enc = sum(p.size for p in model.encoder_parameters().values())
    n_dec = sum(p.size for p in model.decoder_parameters().values())
    assert n_dec < 0.05 * n_enc


@pytest.mark.parametrize("variant", VARIANTS)
def test_system_output_shapes(variant, rng):
    model = SemanticSystem(SMALL, variant, seed=0)
    images, h, nv = _inputs(rng, SMALL)
    recon, logits, x = model(images, h, nv, train=False)
    assert recon.shape == (2, 4, 32, 32, 3) and logits.shape == (2, 4, 10)
    assert x.shape == (2, 16, 14, 4)


def test_unknown_variant():
    with pytest.raises(ValueError):
        SemanticSystem(LINK, "djscc")


def test_end_to_end_gradients_finite(rng):
    model = SemanticSystem(SMALL, "full", seed=0)
    images, h, nv = _inputs(rng, SMALL)
    noise = complex_noise((2, 16, 14, 4), nv[:, None, None, None], rng)
    labels = rng.integers(0, 10, (2, 4))
    with Tape() as tape:
        recon, logits, _ = model(images, h, nv, noise)
        loss = composite_loss(recon, images, logits, labels)
        grads = tape.backward(loss)
    params = model.parameters()
    for name, p in params.items():
        assert name and p.node_id in grads, name
        assert np.all(np.isfinite(grads[p.node_id])), name
    zero = {n for n, p in params.items() if not np.any(grads[p.node_id] != 0)}
    # layers upstream of a zero-initialized output layer see no gradient at init
    shadowed = {n for n in params if (n.startswith("precoder.") and not n.startswith("precoder.out."))
                or (n.startswith("decoder.attention.") and not n.startswith("decoder.attention.out."))}
    assert zero <= shadowed | {"decoder.attention.out.depthwise"}
    nonzero = set(params) - zero
    assert "precoder.alpha" in nonzero


def test_ctensor_input_validation(rng):
    dec = Decoder(LINK, rng=0)
    bad = CTensor(DiffTensor(np.zeros((1, 32, 13, 4))), DiffTensor(np.zeros((1, 32, 13, 4))))
    with pytest.raises(ValueError):
        dec(bad)
