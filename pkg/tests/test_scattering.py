import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from loca.datagen.gp import GpSpec, gp_sample
from loca.errors import ConfigError, ShapeError
from loca.scattering import Scattering, ScatteringConfig, build_filterbank, scatter

ANTI = ScatteringConfig(J=4, L=8, m0=2, input_shape=(100,))
ANTI_128 = ScatteringConfig(J=4, L=8, m0=2, input_shape=(128,))
DARCY = ScatteringConfig(J=1, L=2, m0=2, input_shape=(32, 32))
CONFIGS = [ANTI, ANTI_128, DARCY]


@pytest.fixture(scope="module", params=CONFIGS, ids=["1d-100", "1d-128", "2d-32"])
def sc(request):
    return Scattering(request.param)


def test_widths_are_deterministic():
    # 1 + J first-order + J(J-1)/2 second-order paths, 7 samples each on 100 points
    assert ANTI.width == 11 * 7
    assert ANTI_128.width == 11 * 8
    # 1 + 2 + 0 paths (J=1 admits no increasing pair) ... times 16x16 samples
    assert DARCY.width == 3 * 16 * 16
    assert scatter(np.zeros(100), ANTI).shape == (77,)


def test_paths_increase_in_scale_and_respect_m0():
    for p in ScatteringConfig(J=3, L=4, m0=2, input_shape=(16, 16)).paths():
        assert len(p) <= 2
        assert all(a[1] < b[1] for a, b in zip(p, p[1:]))
    assert ScatteringConfig(J=3, m0=1, input_shape=(16,)).paths() == [(), ((0, 0),), ((0, 1),), ((0, 2),)]


def test_filterbank_band_pass_unit_dc_and_littlewood_paley(sc):
    fb = sc.filters
    assert abs(fb.phi_hat.ravel()[0] - 1) < 1e-12
    for lam, psi in fb.psi_hat.items():
        assert abs(psi.ravel()[0]) < 1e-6, lam
    assert fb.littlewood_paley().max() <= 1.05


def test_zero_and_constant_inputs(sc):
    shape = sc.config.input_shape
    assert not np.any(sc(np.zeros(shape)))
    orders = sc.by_order(np.full(shape, 2.5))
    np.testing.assert_allclose(orders[0], 2.5, atol=1e-12)
    assert np.abs(orders[1]).max() < 1e-8
    assert np.abs(orders[2]).max() < 1e-8 if 2 in orders else True


@pytest.mark.parametrize("cfg", [ANTI, ANTI_128], ids=["100", "128"])
def test_shift_stability_versus_raw_samples(cfg):
    # smooth at the grid scale: GP correlation length of 1.5 cells
    sc = Scattering(cfg)
    x = np.arange(cfg.input_shape[0], dtype=float)
    for seed in range(10):
        u = gp_sample(GpSpec(1.5), x, np.random.default_rng(seed))
        a, b = sc(u), sc(np.roll(u, 1))
        d_scat = np.linalg.norm(a - b) / np.linalg.norm(a)
        d_raw = np.linalg.norm(u - np.roll(u, 1)) / np.linalg.norm(u)
        assert d_scat <= 0.05
        assert d_raw >= 10 * d_scat


def test_nonexpansive_and_energy_bound(sc):
    rng = np.random.default_rng(0)
    shape = sc.config.input_shape
    u, v = rng.normal(size=(2, 30) + shape)
    du = np.linalg.norm((u - v).reshape(30, -1), axis=1)
    ds = np.linalg.norm(sc(u) - sc(v), axis=1)
    assert np.all(ds <= 1.05 * du)
    assert np.all(np.linalg.norm(sc(u), axis=1) <= 1.05 * np.linalg.norm(u.reshape(30, -1), axis=1))


@given(st.integers(0, 10 ** 6), st.floats(0.1, 10))
def test_scattering_is_deterministic_and_positively_homogeneous(seed, a):
    sc = Scattering(ScatteringConfig(J=2, L=4, m0=2, input_shape=(16,)))
    u = np.random.default_rng(seed).normal(size=16)
    assert np.array_equal(sc(u), sc(u.copy()))
    np.testing.assert_allclose(sc(a * u), a * sc(u), rtol=1e-10, atol=1e-12)


def test_batched_matches_single():
    sc = Scattering(DARCY)
    u = np.random.default_rng(1).normal(size=(3, 32, 32))
    np.testing.assert_allclose(sc(u), np.stack([sc(x) for x in u]), atol=1e-14)


def test_config_errors():
    with pytest.raises(ConfigError):
        ScatteringConfig(J=6, input_shape=(32,))
    with pytest.raises(ConfigError):
        ScatteringConfig(J=1, m0=3, input_shape=(32,))
    with pytest.raises(ShapeError):
        Scattering(ANTI)(np.zeros(64))


def test_filterbank_indexes_angles_and_scales():
    fb = build_filterbank(ANTI)
    assert set(fb.psi_hat) == {(0, j) for j in range(4)}
    assert set(build_filterbank(DARCY).psi_hat) == {(r, 0) for r in range(2)}
