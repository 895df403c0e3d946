import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from semcom.autodiff import DiffTensor
from semcom.config import ConfigError, LinkConfig
from semcom.grid import (Grid, GridError, dump_grid, load_grid, map_to_grid, map_to_grid_t, pilot_reference,
                         power_normalize, power_normalize_t, remove_pilots, remove_pilots_t, transmit_power)
from semcom.autodiff.cplx import from_complex

LINK = LinkConfig()


def test_default_link_dimensions():
    assert LINK.n_st == 12 and LINK.n_sf == 32
    assert LINK.data_symbols == (0, 1, 3, 4, 5, 6, 7, 8, 9, 10, 12, 13)


def test_link_validation():
    with pytest.raises(ConfigError):
        LinkConfig(n_k=5, n_m=4)
    with pytest.raises(ConfigError):
        LinkConfig(pilot_symbols=(2, 14))


def test_roundtrip_and_pilots(rng):
    x = rng.standard_normal((3, 32, 12, 4, 2))
    g = map_to_grid(x, LINK)
    assert g.shape == (3, 32, 14, 4)
    np.testing.assert_array_equal(remove_pilots(g, LINK), x)
    spec = LINK.pilot
    owned = spec.comb_mask()
    for i, t in enumerate(spec.symbol_indices):
        np.testing.assert_array_equal(g[0, :, t][owned], spec.sequence[:, i][owned])
        np.testing.assert_array_equal(g[0, :, t][~owned], 0)


def test_pilot_reference():
    yp = pilot_reference(LINK)
    assert np.abs(yp[:, list(LINK.data_symbols)]).sum() == 0
    # comb pilots: each subcarrier of a pilot symbol belongs to exactly one user
    assert np.count_nonzero(yp) == LINK.n_f * len(LINK.pilot_symbols)
    np.testing.assert_array_equal(yp, map_to_grid(np.zeros((32, 12, 4, 2)), LINK))
    np.testing.assert_allclose(np.abs(LINK.pilot.sequence), 1.0)


def test_remove_pilots_index_oracle(rng):
    g = rng.standard_normal((32, 14, 4)) + 1j * rng.standard_normal((32, 14, 4))
    out = remove_pilots(g, LINK)
    data_cols = [t for t in range(14) if t not in (2, 11)]
    for j, t in enumerate(data_cols):
        np.testing.assert_array_equal(out[:, j, :, 0], g[:, t].real)
        np.testing.assert_array_equal(out[:, j, :, 1], g[:, t].imag)
    assert not remove_pilots(np.zeros((32, 14, 4)), LINK).any()


def test_map_dimension_error():
    with pytest.raises(GridError):
        map_to_grid(np.zeros((32, 13, 4, 2)), LINK)


def test_power_examples():
    x = np.full((4, 3, 2), np.sqrt(0.5) + 0j)
    np.testing.assert_allclose(power_normalize(x, 1.0), x)
    y = np.full((4, 3, 2), np.sqrt(2.0) + 0j)       # per-RE power 4
    np.testing.assert_allclose(power_normalize(y, 1.0), y / 2)
    with pytest.raises(GridError):
        power_normalize(np.zeros((2, 2, 2)))


@given(st.integers(0, 2 ** 31), st.floats(0.1, 10))
def test_power_normalize_random(seed, p):
    r = np.random.default_rng(seed)
    x = (r.standard_normal((5, 7, 4)) + 1j * r.standard_normal((5, 7, 4))) * r.uniform(0.01, 100)
    assert abs(transmit_power(power_normalize(x, p)) - p) < 1e-6 * p


def test_differentiable_forms_match(rng):
    feats = rng.standard_normal((2, 32, 12, 4, 2))
    g = map_to_grid_t(DiffTensor(feats), LINK)
    np.testing.assert_allclose(g.numpy(), map_to_grid(feats, LINK), atol=1e-6)
    np.testing.assert_allclose(remove_pilots_t(g, LINK).data, feats, atol=1e-6)
    x = rng.standard_normal((2, 32, 14, 4)) + 1j * rng.standard_normal((2, 32, 14, 4))
    np.testing.assert_allclose(power_normalize_t(from_complex(x, np.float64), 2.0).numpy(),
                               power_normalize(x, 2.0), atol=1e-12)


def test_grid_dump_roundtrip(tmp_path, rng):
    data = (rng.standard_normal((8, 14, 4)) + 1j * rng.standard_normal((8, 14, 4))).astype(np.complex64)
    path = tmp_path / "g.bin"
    dump_grid(path, Grid(data, "antennas"))
    assert path.read_bytes().startswith(b"GRID v1 8 14 4 antennas\n")
    back = load_grid(path)
    assert back.kind == "antennas"
    np.testing.assert_array_equal(back.data, data)


def test_grid_dump_truncated(tmp_path):
    path = tmp_path / "g.bin"
    dump_grid(path, Grid(np.zeros((2, 2, 2), complex), "streams"))
    path.write_bytes(path.read_bytes()[:-4])
    with pytest.raises(GridError, match="payload"):
        load_grid(path)
