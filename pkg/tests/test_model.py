import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from loca.config import EncoderConfig, LocaConfig, QuadratureConfig, preset
from loca.errors import ConfigError, ShapeError
from loca.model import Loca
from loca.trainer import mse_loss

from helpers import analytic_grads, fd_grad, rel_err

GOLDEN = Path(__file__).parent / "golden"


def small_cfg(**kw):
    base = dict(n=6, l=4, H=4, d_y=1, d_s=2, input_shape=(32,), encoder=EncoderConfig(J=2, m0=2),
                g_depth=1, g_width=8, f_depth=1, f_width=8, q_depth=1, q_width=8,
                quadrature=QuadratureConfig(q_per_dim=9))
    base.update(kw)
    return LocaConfig(**base)


@pytest.fixture(scope="module")
def model():
    return Loca(small_cfg())


def test_structure_follows_config():
    m = Loca(preset("antiderivative").model)
    assert m.feature_dim == 77
    assert m.specs["g"].layer_dims() == [(11, 100), (100, 100), (100, 100)]
    assert m.specs["f"].layer_dims() == [(77, 500), (500, 100)]
    assert m.specs["q"].layer_dims() == [(11, 100), (100, 100), (100, 100)]
    assert len(m.rule) == 64
    no_kca = Loca(preset("darcy-ablation").model)
    assert "q" not in no_kca.specs and "kernel.log_beta" not in no_kca.init_params(0)


def test_query_features_lead_with_coordinates(model):
    Y = np.array([[0.0], [1.0]])
    qf = model.query_features(Y)
    assert qf.shape == (2, 5)
    np.testing.assert_array_equal(qf[:, 0], [0.0, 1.0])
    # the dyadic block alone cannot tell the endpoints apart
    np.testing.assert_allclose(qf[0, 1:], qf[1, 1:], atol=1e-12)
    plain = Loca(small_cfg(query_coords=False))
    assert plain.query_features(Y).shape == (2, 4)


def test_antiderivative_output_shape():
    m = Loca(preset("antiderivative").model)
    p = m.init_params(0)
    x = np.linspace(0, 1, 100)
    out = m.forward(p, m.encode(np.sin(2 * np.pi * x)[None]), x[:, None]).values
    assert out.shape == (1, 100, 1)


@given(st.integers(0, 10 ** 5))
def test_predictions_are_convex_combinations_of_v(seed):
    m = Loca(small_cfg())
    rng = np.random.default_rng(seed)
    p = {k: v + 0.5 * rng.normal(size=v.shape) for k, v in m.init_params(seed).items()}
    feats = m.encode(rng.normal(size=(3, 32)))
    v = m.input_features(p, feats).values
    pred = m.forward(p, feats, rng.random((11, 1))).values
    lo, hi = v.min(axis=1)[:, None, :], v.max(axis=1)[:, None, :]
    assert np.all(pred >= lo - 1e-10) and np.all(pred <= hi + 1e-10)


def test_constant_v_rows_give_constant_prediction(model):
    p = model.init_params(0)
    last = model.specs["f"].depth
    c = np.array([1.5, -2.0])
    p[f"f.{last}.W"] = np.zeros_like(p[f"f.{last}.W"])
    p[f"f.{last}.b"] = np.tile(c, model.cfg.n)
    feats = model.encode(np.random.default_rng(0).normal(size=(2, 32)))
    pred = model.forward(p, feats, np.random.default_rng(1).random((5, 1))).values
    np.testing.assert_allclose(pred, np.broadcast_to(c, pred.shape), rtol=1e-13)


def test_zero_scores_predict_feature_means(model):
    p = model.init_params(2)
    last = model.specs["g"].depth
    p[f"g.{last}.W"] *= 0
    p[f"g.{last}.b"] *= 0
    feats = model.encode(np.random.default_rng(0).normal(size=(2, 32)))
    v = model.input_features(p, feats).values
    pred = model.forward(p, feats, np.linspace(0, 1, 4)[:, None]).values
    np.testing.assert_allclose(pred, np.broadcast_to(v.mean(axis=1)[:, None, :], pred.shape), rtol=1e-12)


def test_zero_f_weights_make_v_independent_of_u(model):
    p = model.init_params(0)
    for k in p:
        if k.startswith("f.") and k.endswith(".W"):
            p[k] = np.zeros_like(p[k])
    feats = model.encode(np.random.default_rng(0).normal(size=(2, 32)))
    v = model.input_features(p, feats).values
    np.testing.assert_array_equal(v[0], v[1])


def test_query_permutation_equivariance(model):
    rng = np.random.default_rng(5)
    p = model.init_params(5)
    feats = model.encode(rng.normal(size=(2, 32)))
    Y = rng.random((13, 1))
    perm = rng.permutation(13)
    a = model.forward(p, feats, Y).values
    b = model.forward(p, feats, Y[perm]).values
    np.testing.assert_array_equal(a[:, perm], b)


def test_per_sample_queries_match_shared_path(model):
    rng = np.random.default_rng(6)
    p = model.init_params(6)
    feats = model.encode(rng.normal(size=(3, 32)))
    Y = rng.random((3, 7, 1))
    batched = model.forward(p, feats, Y).values
    single = np.concatenate([model.forward(p, feats[i:i + 1], Y[i]).values for i in range(3)])
    np.testing.assert_allclose(batched, single, rtol=1e-13, atol=1e-15)


def test_prediction_is_continuous_in_the_query(model):
    p = model.init_params(8)
    feats = model.encode(np.random.default_rng(8).normal(size=(1, 32)))
    y = np.array([[0.4]])
    base = model.forward(p, feats, y).values
    diffs = [np.abs(model.forward(p, feats, y + d).values - base).max() for d in (1e-2, 1e-4, 1e-6)]
    assert diffs[0] > diffs[1] > diffs[2]
    assert diffs[2] < 1e-4


@pytest.mark.parametrize("kind", ["gauss_legendre", "monte_carlo"])
@pytest.mark.parametrize("shared", [True, False])
def test_full_loss_gradients_match_finite_differences(kind, shared):
    cfg = small_cfg(n=4, l=3, g_width=5, f_width=6, q_width=5,
                    quadrature=QuadratureConfig(kind=kind, q_per_dim=7))
    m = Loca(cfg)
    rng = np.random.default_rng(11)
    params = {k: v + 0.1 * rng.normal(size=v.shape) for k, v in m.init_params(1).items()}
    feats = m.encode(rng.normal(size=(5, 32)))
    Y = rng.random((6, 1)) if shared else rng.random((5, 6, 1))
    S = rng.normal(size=(5, 6, 2))
    loss = lambda p: mse_loss(m.forward(p, feats, Y), S)
    grads = analytic_grads(loss, params)
    for name in params:
        fd = fd_grad(loss, params, name)
        if np.linalg.norm(fd) < 1e-7 and np.linalg.norm(grads[name]) < 1e-7:
            # structurally zero: gamma cancels in the normalization, the last
            # q bias cancels in pairwise distances
            assert name in ("kernel.log_gamma", f"q.{cfg.q_depth}.b"), name
            continue
        assert rel_err(fd, grads[name]) < 1e-5, name


def test_golden_features_and_prediction():
    golden = json.loads((GOLDEN / "model_antiderivative.json").read_text())
    m = Loca(preset("antiderivative").model)
    p = m.init_params(golden["seed"])
    x = np.linspace(0, 1, 100)
    u = np.sin(2 * np.pi * x) + 0.5 * np.cos(6 * np.pi * x)
    feats = m.encode(u[None])
    np.testing.assert_allclose(m.input_features(p, feats).values[0, :, 0], golden["v"], rtol=1e-10, atol=1e-13)
    np.testing.assert_allclose(m.forward(p, feats, x[:, None]).values[0, :, 0], golden["prediction"],
                               rtol=1e-10, atol=1e-13)


def test_checkpoint_round_trip_and_validation(tmp_path, model):
    p = model.init_params(3)
    model.save(tmp_path / "c.loca", p, {"note": "x"})
    m2, p2, meta = Loca.load(tmp_path / "c.loca")
    assert meta["note"] == "x" and m2.cfg == model.cfg
    for k in p:
        assert np.array_equal(p[k], p2[k]) and p2[k].shape == p[k].shape
    bad = dict(p)
    bad["f.0.W"] = np.zeros((3, 3))
    model.save(tmp_path / "bad.loca", bad)
    with pytest.raises(ConfigError):
        Loca.load(tmp_path / "bad.loca")


def test_shape_errors_carry_stage(model):
    p = model.init_params(0)
    with pytest.raises(ShapeError, match=r"\[features\]"):
        model.input_features(p, np.zeros((2, 5)))
    with pytest.raises(ShapeError, match=r"\[encoder\]"):
        model.encode(np.zeros((2, 31)))
    with pytest.raises(ShapeError, match=r"\[forward\]"):
        model.forward(p, model.encode(np.zeros((2, 32))), np.zeros((3, 4, 1)))


def test_fourier_encoder_option():
    m = Loca(small_cfg(encoder=EncoderConfig(kind="fourier", d=9)))
    assert m.feature_dim == 9
    feats = m.encode(np.random.default_rng(0).normal(size=(2, 32)))
    assert feats.shape == (2, 9)
    assert m.forward(m.init_params(0), feats, np.random.default_rng(1).random((4, 1))).shape == (2, 4, 2)
