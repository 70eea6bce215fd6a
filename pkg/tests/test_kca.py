import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from loca.errors import ConfigError, ShapeError
from loca.numerics import tape as T
from loca.kca import (KernelConfig, attention_weights, coupling_gram, coupling_kernel, coupling_kernel_lifted,
                      gauss_legendre_rule, kca_transform, monte_carlo_rule, rbf_kernel)

from helpers import analytic_grads, fd_grad, rel_err


def lift(seed, width=6, d_y=1):
    W = np.random.default_rng(seed).normal(size=(d_y, width)) * 2
    b = np.random.default_rng(seed + 1).normal(size=width)
    return lambda y: np.tanh(np.asarray(y) @ W + b)


# --- base kernel -----------------------------------------------------------------

def test_rbf_examples():
    z = np.random.default_rng(0).normal(size=(4, 3))
    np.testing.assert_allclose(np.diag(rbf_kernel(z, z, np.log(2.5), 0.0).values), 2.5, rtol=1e-15)
    np.testing.assert_allclose(rbf_kernel(z, z + 5, np.log(1.7), -60.0).values, 1.7, rtol=1e-12)
    k = rbf_kernel(np.zeros((1, 2)), np.array([[0.6, 0.8]]), 0.0, 0.0).values
    assert k[0, 0] == pytest.approx(np.exp(-1.0), rel=1e-15)


def test_rbf_width_mismatch():
    with pytest.raises(ShapeError):
        rbf_kernel(np.zeros((2, 3)), np.zeros((2, 4)), 0.0, 0.0)


def test_kernel_config_log_parameters():
    p = KernelConfig(2.0, 0.5).log_params()
    assert float(p["kernel.log_gamma"]) == pytest.approx(np.log(2.0))
    assert p["kernel.log_beta"].shape == ()
    with pytest.raises(ConfigError):
        KernelConfig(0.0, 1.0)


# --- quadrature --------------------------------------------------------------------

def test_gauss_legendre_textbook_rules():
    r = gauss_legendre_rule(1, [(-1, 1)])
    np.testing.assert_allclose(r.nodes.ravel(), [0.0], atol=1e-15)
    np.testing.assert_allclose(r.weights, [2.0])
    r = gauss_legendre_rule(2, [(-1, 1)])
    np.testing.assert_allclose(np.sort(r.nodes.ravel()), [-1 / np.sqrt(3), 1 / np.sqrt(3)], rtol=1e-15)
    np.testing.assert_allclose(r.weights, [1.0, 1.0], rtol=1e-15)
    assert float(r.weights @ r.nodes[:, 0] ** 2) == pytest.approx(2 / 3, abs=1e-14)
    r = gauss_legendre_rule(5)
    assert float(r.weights @ r.nodes[:, 0] ** 9) == pytest.approx(0.1, abs=1e-14)


@given(st.integers(1, 12), st.floats(-3, 3), st.floats(0.1, 4))
def test_gauss_legendre_weights_sum_to_volume(q, a, length):
    r = gauss_legendre_rule(q, [(a, a + length)])
    assert abs(r.weights.sum() - length) <= 1e-10
    assert np.all(r.weights > 0)


def test_tensor_product_rule_integrates_separable_polynomials():
    r = gauss_legendre_rule(4, [(0, 1), (0, 2)])
    assert len(r) == 16 and r.volume == pytest.approx(2.0)
    val = r.weights @ (r.nodes[:, 0] ** 7 * r.nodes[:, 1] ** 3)
    assert val == pytest.approx((1 / 8) * (2 ** 4 / 4), rel=1e-14)


def test_degenerate_box_and_empty_rule():
    with pytest.raises(ConfigError):
        gauss_legendre_rule(3, [(1, 1)])
    with pytest.raises(ConfigError):
        gauss_legendre_rule(0)


def test_monte_carlo_rule_uniform_weights():
    r = monte_carlo_rule(np.random.default_rng(0).random((40, 2)), [(0, 2), (0, 1)])
    np.testing.assert_allclose(r.weights, 2 / 40)


# --- coupling kernel ----------------------------------------------------------------

def test_constant_lift_gives_inverse_volume_and_weighted_mean():
    rule = gauss_legendre_rule(7, [(0, 3)])
    q = lambda y: np.ones((len(y), 4))
    Y = np.linspace(0, 3, 9)[:, None]
    kap = coupling_kernel(Y, rule, q, np.log(3.0), 0.0).values
    np.testing.assert_allclose(kap, 1 / 3, rtol=1e-14)
    g = np.random.default_rng(0).normal(size=(7, 5, 2))
    gt = kca_transform(g, kap, rule).values
    mean = np.einsum("q,qnk->nk", rule.weights, g) / 3
    np.testing.assert_allclose(gt, np.broadcast_to(mean, gt.shape), rtol=1e-12)
    phi = attention_weights(gt).values
    np.testing.assert_allclose(phi, np.broadcast_to(phi[0], phi.shape), atol=1e-15)


def test_kernel_symmetric_on_shared_nodes():
    rule = gauss_legendre_rule(20)
    qz = lift(0)(rule.nodes)
    kap = coupling_kernel_lifted(qz, qz, rule, 0.3, -0.2, aliased=True).values
    np.testing.assert_allclose(kap, kap.T, atol=1e-12)
    np.testing.assert_allclose(kap, coupling_kernel_lifted(qz, qz, rule, 0.3, -0.2).values, atol=1e-15)


@given(st.integers(0, 10 ** 5))
def test_gram_cauchy_schwarz_and_psd(seed):
    rng = np.random.default_rng(seed)
    rule = gauss_legendre_rule(16)
    q = lift(seed)
    Y = rng.random((40, 1))
    kap = coupling_gram(q(Y), q(rule.nodes), rule, rng.normal(), rng.normal()).values
    d = np.diag(kap)
    assert np.all(kap ** 2 <= np.outer(d, d) + 1e-12)
    assert np.abs(kap - kap.T).max() <= 1e-12
    ev = np.linalg.eigvalsh(kap)
    assert ev.min() >= -1e-8 * ev.max()


def test_gram_exactly_symmetric_when_denominators_are_floored():
    rule = gauss_legendre_rule(8)
    qz = np.zeros((8, 3))
    qy = 40.0 + np.random.default_rng(0).normal(size=(30, 3))
    kap = coupling_gram(qy, qz, rule, 0.0, 0.0).values
    assert np.abs(kap).max() > 1e6 and np.array_equal(kap, kap.T)


def test_gram_gradients_match_finite_differences():
    rng = np.random.default_rng(3)
    rule = gauss_legendre_rule(6)
    qz = rng.normal(size=(6, 4))
    weights = rng.normal(size=(5, 5))
    fn = lambda p: T.tsum(T.mul(coupling_gram(p["qy"], qz, rule, p["lg"], p["lb"]), weights))
    params = {"qy": rng.normal(size=(5, 4)), "lg": np.array(0.2), "lb": np.array(-0.4)}
    grads = analytic_grads(fn, params)
    for name in ("qy", "lb"):
        assert rel_err(fd_grad(fn, params, name), grads[name]) < 1e-6, name


def test_denominator_floor_keeps_far_queries_finite():
    rule = gauss_legendre_rule(4)
    qz = np.zeros((4, 2))
    qy = np.full((1, 2), 100.0)
    kap = coupling_kernel_lifted(qy, qz, rule, 0.0, np.log(50.0)).values
    assert np.isfinite(kap).all() and kap.min() >= 0


# --- transform and attention ----------------------------------------------------------

def test_volume_rescaling_invariance():
    rule = gauss_legendre_rule(12)
    q = lift(3)
    Y = np.random.default_rng(1).random((10, 1))
    g = np.random.default_rng(2).normal(size=(12, 4, 1))
    base = kca_transform(g, coupling_kernel(Y, rule, q, 0.0, 0.0), rule).values
    for c in (1e-3, 0.7, 13.0, 1e4):
        r2 = rule.rescaled(c)
        out = kca_transform(g, coupling_kernel(Y, r2, q, 0.0, 0.0), r2).values
        assert np.linalg.norm(out - base) <= 1e-10 * np.linalg.norm(base)


def test_monte_carlo_permutation_invariance():
    rng = np.random.default_rng(4)
    pts = rng.random((30, 1))
    q = lift(5)
    g = rng.normal(size=(30, 3, 2))
    Y = rng.random((6, 1))
    rule = monte_carlo_rule(pts)
    base = kca_transform(g, coupling_kernel(Y, rule, q, 0.0, 0.0), rule).values
    perm = rng.permutation(30)
    rp = monte_carlo_rule(pts[perm])
    out = kca_transform(g[perm], coupling_kernel(Y, rp, q, 0.0, 0.0), rp).values
    np.testing.assert_allclose(out, base, rtol=1e-12, atol=1e-14)


def test_monte_carlo_agrees_with_gauss_legendre():
    q = lift(7, width=3)
    gl = gauss_legendre_rule(64)
    y0 = np.array([[0.37]])
    # fixed integrand: kappa(y0, z) g(z) with kappa normalized by an accurate rule
    den_y = float((rbf_kernel(q(y0), q(gl.nodes), 0.0, 0.0).values @ gl.weights)[0])

    def integrand(z):
        kz = rbf_kernel(q(z), q(gl.nodes), 0.0, 0.0).values @ gl.weights
        k = rbf_kernel(q(y0), q(z), 0.0, 0.0).values[0]
        return k / np.sqrt(den_y * kz) * np.sin(3 * z[:, 0])

    g32 = gauss_legendre_rule(32)
    exact = float(g32.weights @ integrand(g32.nodes))
    z = np.random.default_rng(0).random((10 ** 4, 1))
    vals = integrand(z)
    se = vals.std(ddof=1) / np.sqrt(len(z))
    assert abs(vals.mean() - exact) <= 3 * se


def test_attention_zero_scores_are_uniform():
    phi = attention_weights(np.zeros((5, 8, 2))).values
    np.testing.assert_allclose(phi, 1 / 8, rtol=1e-15)


def test_attention_saturates_on_dominant_node():
    rule = gauss_legendre_rule(10)
    q = lift(9)
    Y = np.linspace(0, 1, 7)[:, None]
    g = np.zeros((10, 5, 1))
    g[3, 2, 0] = 1e6
    kap = coupling_kernel(Y, rule, q, 0.0, 0.0)
    phi = attention_weights(kca_transform(g, kap, rule)).values
    assert np.all(kap.values[:, 3] > 0)
    np.testing.assert_allclose(phi[:, 2, 0], 1.0, atol=1e-6)


@given(arrays(np.float64, (4, 6, 2), elements=st.floats(-1e3, 1e3)))
def test_attention_weights_on_simplex(scores):
    phi = attention_weights(scores).values
    assert phi.min() >= 0
    assert np.abs(phi.sum(axis=-2) - 1).max() <= 1e-12


def test_transform_shape_checks():
    rule = gauss_legendre_rule(3)
    with pytest.raises(ShapeError):
        kca_transform(np.zeros((4, 2, 1)), np.zeros((5, 3)), rule)
