import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from semcom.channel import (PRESETS, ScenarioProfile, apply_channel, csi_magnitude, deep_fade_two_ray,
                            ebn0_to_noise_var, frequency_response, sample_channel, sample_channels,
                            scenario_profile, snr_to_noise_var)


def test_presets_declared_constants():
    umi, uma, rma = (scenario_profile(n) for n in ("UMi", "UMa", "RMa"))
    assert len(umi.delays) == 4 and umi.rician_k == 3
    assert len(uma.delays) == 4 and uma.rician_k == 9
    assert len(rma.delays) == 6 and rma.rician_k == 0
    np.testing.assert_allclose(np.array(umi.delays) * 1e6, [0, 0.1, 0.3, 0.7])
    assert umi.powers == (0.5, 0.3, 0.15, 0.05)
    assert (umi.pathloss_spread_db, uma.pathloss_spread_db, rma.pathloss_spread_db) == (2, 2, 3)


def test_delay_spread_ordering():
    s = {n: p.rms_delay_spread for n, p in PRESETS.items()}
    assert s["UMa"] < s["UMi"] < s["RMa"]


def test_unknown_scenario():
    with pytest.raises(KeyError):
        scenario_profile("Indoor")


def test_profile_validation():
    with pytest.raises(ValueError):
        ScenarioProfile("x", (0.0, 1e-7), (0.5, 0.6), 0.0, 0.0)
    with pytest.raises(ValueError):
        ScenarioProfile("x", (1e-7, 0.0), (0.5, 0.5), 0.0, 0.0)
    with pytest.raises(ValueError):
        ScenarioProfile("x", (0.0,), (1.0,), -1.0, 0.0)


def test_profile_from_json(tmp_path):
    path = tmp_path / "street.json"
    path.write_text(json.dumps({"taps_us": [0, 0.2], "powers": [0.7, 0.3], "rician_k": 1, "spread_db": 0}))
    p = scenario_profile(str(path))
    assert p.name == "street"
    np.testing.assert_allclose(p.delays, [0, 2e-7])


def test_flat_single_tap():
    p = ScenarioProfile("flat", (0.0,), (1.0,), 0.0, 0.0)
    h = frequency_response(p.delays, np.ones(1), 16, 15e3)
    np.testing.assert_allclose(np.abs(h), 1.0)


def test_two_ray_closed_form():
    tau, df, n_f = 2.5e-6, 15e3, 64
    h = frequency_response([0.0, tau], np.ones(2), n_f, df)
    f = np.arange(n_f)
    np.testing.assert_allclose(np.abs(h) ** 2, 2 + 2 * np.cos(2 * np.pi * f * df * tau), atol=1e-12)
    # f * df * tau = k + 1/2  ->  f = (k + 1/2) / (df tau) = 13.33..., not on the grid; pick tau for an exact null
    tau = 1 / (2 * df * 5)
    h = frequency_response([0.0, tau], np.ones(2), n_f, df)
    nulls = np.flatnonzero(np.abs(h) < 1e-9)
    np.testing.assert_array_equal(nulls, np.arange(5, n_f, 10))


def test_sampling_deterministic():
    a = sample_channel("UMi", 8, 14, 2, 4, seed=3).h
    b = sample_channel("UMi", 8, 14, 2, 4, seed=3).h
    assert a.tobytes() == b.tobytes()


def test_block_fading_constant_in_time():
    h = sample_channels("RMa", 2, 8, 14, 2, 3, rng=0)
    assert h.shape == (2, 8, 14, 2, 3)
    np.testing.assert_array_equal(h, np.repeat(h[:, :, :1], 14, axis=2))


@pytest.mark.parametrize("name", ["UMi", "UMa", "RMa"])
def test_unit_average_power(name):
    h = sample_channels(name, 10000, 16, 1, 1, 1, rng=1, lognormal=False)
    assert 0.97 <= np.mean(np.abs(h) ** 2) <= 1.03


def test_apply_channel_scalar():
    y = apply_channel(np.full((1, 1, 1, 1), 2 + 0j), np.array([[[1 + 1j]]]), 0.0)
    assert y.item() == 2 + 2j


def test_noise_statistics():
    x = np.zeros((100000, 1, 1))
    y = apply_channel(np.ones((100000, 1, 1, 1)), x, 0.5, rng=0).reshape(-1)
    assert abs(np.var(y) / 0.5 - 1) < 0.03
    assert abs(y.mean()) < 3 * np.sqrt(0.5) / np.sqrt(y.size)


def test_apply_channel_matches_per_re_oracle(rng):
    h = rng.standard_normal((3, 2, 2, 2)) + 1j * rng.standard_normal((3, 2, 2, 2))
    x = rng.standard_normal((3, 2, 2)) + 1j * rng.standard_normal((3, 2, 2))
    y = apply_channel(h, x, 0.0)
    for f in range(3):
        for t in range(2):
            np.testing.assert_allclose(y[f, t], h[f, t] @ x[f, t], atol=1e-12)


def test_apply_channel_dimension_error():
    with pytest.raises(ValueError):
        apply_channel(np.zeros((2, 2, 2, 3)), np.zeros((2, 2, 2)), 0.0)


@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 10000))
def test_apply_channel_linear(a, b, seed):
    r = np.random.default_rng(seed)
    h = r.standard_normal((4, 2, 2, 3)) + 1j * r.standard_normal((4, 2, 2, 3))
    x1, x2 = (r.standard_normal((4, 2, 3)) + 1j * r.standard_normal((4, 2, 3)) for _ in range(2))
    lhs = apply_channel(h, a * x1 + b * x2, 0.0)
    rhs = a * apply_channel(h, x1, 0.0) + b * apply_channel(h, x2, 0.0)
    np.testing.assert_allclose(lhs, rhs, atol=1e-6)


def test_ebn0_examples():
    assert ebn0_to_noise_var(0, 2, 0.5, 1.0) == pytest.approx(1.0)
    assert ebn0_to_noise_var(10, 2, 0.5, 1.0) == pytest.approx(0.1)
    assert ebn0_to_noise_var(3, 4, 0.5) == pytest.approx(ebn0_to_noise_var(3, 2, 0.5) / 2)
    assert snr_to_noise_var(10, 0.25) == pytest.approx(0.025)
    with pytest.raises(ValueError):
        ebn0_to_noise_var(0, 2, 1.5)


def test_two_ray_notch_is_exact():
    h = deep_fade_two_ray(5, 16, 2, 2, 4, rng=0)
    per_f = np.abs(h).max(axis=(2, 3, 4))          # [B, F]
    assert np.all(per_f.min(axis=1) < 1e-12)
    assert np.all(np.isfinite(h))


def test_csi_magnitude_shape():
    h = sample_channels("UMa", 3, 8, 4, 2, 2, rng=0)
    m = csi_magnitude(h)
    assert m.shape == (3, 8) and np.all(m >= 0)
