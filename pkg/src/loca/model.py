"""LOCA forward pass: prediction = sum_i phi_i(y) * v_i(u).

``phi`` comes from the column softmax of kernel-smoothed scores ``g``;
``v = f(D(u))`` where ``D`` is a fixed encoder (scattering or Fourier).
"""
from __future__ import annotations

import json
from functools import cached_property

import numpy as np

from .config import LocaConfig
from .encoding import PositionalEncodingConfig, SpectralEncoderConfig, fourier_project, positional_encode
from .errors import ConfigError, LocaError, NumericError, ShapeError
from .kca import (KernelConfig, QuadratureRule, attention_weights, coupling_kernel_lifted, gauss_legendre_rule,
                  kca_transform, monte_carlo_rule, normalized_kernel, rbf_kernel)
from .numerics import container
from .numerics import tape as T
from .numerics.nn import MlpSpec, init_mlp, mlp_forward
from .numerics.tape import GradientTape, Tensor
from .scattering import Scattering, ScatteringConfig

CHECKPOINT_FORMAT = "loca-checkpoint"


def _stage(name):
    def wrap(fn):
        def inner(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except LocaError as exc:
                raise type(exc)(f"[{name}] {exc}") from exc
        inner.__name__ = fn.__name__
        inner.__doc__ = fn.__doc__
        return inner
    return wrap


class Loca:
    """Model structure for one :class:`LocaConfig`; parameters live in a dict."""

    def __init__(self, cfg: LocaConfig):
        self.cfg = cfg
        self.pe = PositionalEncodingConfig(cfg.H, cfg.d_y)
        enc = cfg.encoder
        if enc.kind == "scattering":
            self._scattering = Scattering(ScatteringConfig(enc.J, enc.L, enc.m0, tuple(cfg.input_shape)))
            self.feature_dim = self._scattering.config.width
        else:
            self._spectral = SpectralEncoderConfig(enc.d)
            self.feature_dim = len(fourier_project(np.zeros(cfg.input_shape), self._spectral))
        width = self.pe.width + (cfg.d_y if cfg.query_coords else 0)
        out = cfg.n * cfg.d_s
        self.specs = {
            "g": MlpSpec(width, out, cfg.g_depth, cfg.g_width),
            "f": MlpSpec(self.feature_dim, out, cfg.f_depth, cfg.f_width),
        }
        if cfg.kca:
            self.specs["q"] = MlpSpec(width, cfg.l, cfg.q_depth, cfg.q_width)
        self.kernel = KernelConfig(cfg.gamma, cfg.beta)
        quad = cfg.quadrature
        self.rule = gauss_legendre_rule(quad.q_per_dim, quad.box) if quad.kind == "gauss_legendre" else None

    @cached_property
    def volume(self) -> float:
        box = np.asarray(self.cfg.quadrature.box, dtype=np.float64)
        return float(np.prod(box[:, 1] - box[:, 0]))

    # --- parameters -----------------------------------------------------------

    def init_params(self, seed: int) -> dict[str, np.ndarray]:
        rng = np.random.default_rng(seed)
        params = {}
        for name in sorted(self.specs):
            params.update(init_mlp(self.specs[name], rng, name))
        if self.cfg.kca:
            params.update(self.kernel.log_params())
        return params

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        return {k: v.shape for k, v in self.init_params(0).items()}

    def _n_layers(self, name):
        return len(self.specs[name].layer_dims())

    # --- stages ---------------------------------------------------------------

    @_stage("encoder")
    def encode(self, u_grid) -> np.ndarray:
        """Fixed encoder ``D(u)`` for ``(N, *input_shape)`` inputs; not differentiated."""
        u_grid = np.asarray(u_grid, dtype=np.float64)
        shape = tuple(self.cfg.input_shape)
        if u_grid.shape[-len(shape):] != shape:
            raise ShapeError(f"inputs of shape {u_grid.shape} do not match grid {shape}")
        if self.cfg.encoder.kind == "scattering":
            return self._scattering(u_grid)
        lead = u_grid.shape[:-len(shape)]
        flat = u_grid.reshape((-1,) + shape)
        out = np.stack([fourier_project(u, self._spectral) for u in flat])
        return out.reshape(lead + (self.feature_dim,))

    @_stage("features")
    def input_features(self, params, feats) -> Tensor:
        """``v(u) = f(D(u))`` reshaped to ``(B, n, d_s)``."""
        feats = np.asarray(feats, dtype=np.float64) if not isinstance(feats, Tensor) else feats
        if feats.shape[-1] != self.feature_dim:
            raise ShapeError(f"encoder width {feats.shape[-1]} != f input width {self.feature_dim}")
        v = mlp_forward(params, "f", feats, self._n_layers("f"))
        return T.reshape(v, v.shape[:-1] + (self.cfg.n, self.cfg.d_s))

    def query_features(self, Y) -> np.ndarray:
        """Inputs of ``g`` and ``q``: the positional encoding, optionally led by ``y``.

        The dyadic encoding alone is 1-periodic, so the endpoints of the unit
        box collide; the raw coordinate separates them.
        """
        Y = np.asarray(Y, dtype=np.float64)
        e = positional_encode(Y, self.pe)
        return np.concatenate([Y, e], axis=-1) if self.cfg.query_coords else e

    def _scores(self, params, enc) -> Tensor:
        g = mlp_forward(params, "g", enc, self._n_layers("g"))
        return T.reshape(g, g.shape[:-1] + (self.cfg.n, self.cfg.d_s))

    def _lift(self, params, enc) -> Tensor:
        return mlp_forward(params, "q", enc, self._n_layers("q"))

    @_stage("attention")
    def attention(self, params, Y, rule: QuadratureRule | None = None) -> Tensor:
        """Attention weights ``(..., P, n, d_s)`` for queries ``(..., P, d_y)``.

        With a Gauss-Legendre rule the queries may be any point set; in Monte
        Carlo mode each leading batch entry integrates over its own queries.
        """
        Y = np.asarray(Y, dtype=np.float64)
        ey = self.query_features(Y)
        if not self.cfg.kca:
            return attention_weights(self._scores(params, ey))
        lg, lb = params["kernel.log_gamma"], params["kernel.log_beta"]
        rule = rule or self.rule
        if rule is None:
            qy = self._lift(params, ey)
            gy = self._scores(params, ey)
            w = np.full(Y.shape[-2], self.volume / Y.shape[-2])
            k = rbf_kernel(qy, qy, lg, lb)
            kappa = normalized_kernel(k, k, w)
            mc = QuadratureRule("monte_carlo", np.zeros((len(w), self.cfg.d_y)), w, self.volume)
            return attention_weights(kca_transform(gy, kappa, mc))
        ez = self.query_features(rule.nodes)
        qz = self._lift(params, ez)
        gz = self._scores(params, ez)
        qy = self._lift(params, ey)
        kappa = coupling_kernel_lifted(qy, qz, rule, lg, lb)
        return attention_weights(kca_transform(gz, kappa, rule))

    @_stage("forward")
    def forward(self, params, feats, Y, rule: QuadratureRule | None = None) -> Tensor:
        """Predictions ``(B, P, d_s)``.

        ``Y`` is ``(P, d_y)`` when every sample shares its queries, else
        ``(B, P, d_y)``.  ``feats`` are encoder outputs ``(B, d)``.
        """
        v = self.input_features(params, feats)
        Y = np.asarray(Y, dtype=np.float64)
        B = v.shape[0]
        if Y.ndim == 2:
            phi = self.attention(params, Y, rule)                      # (P, n, d_s)
            lhs = T.transpose(phi, (2, 0, 1))                          # (d_s, P, n)
            rhs = T.transpose(v, (2, 1, 0))                            # (d_s, n, B)
            return T.transpose(T.matmul(lhs, rhs), (2, 1, 0))          # (B, P, d_s)
        if Y.ndim != 3 or Y.shape[0] != B:
            raise ShapeError(f"queries of shape {Y.shape} do not match batch of {B}")
        if self.cfg.kca and (rule or self.rule) is None:
            phi = self.attention(params, Y, rule)                      # (B, P, n, d_s)
        else:
            flat = Y.reshape(-1, Y.shape[-1])
            uniq, inv = np.unique(flat, axis=0, return_inverse=True)
            phi_u = self.attention(params, uniq, rule)
            phi = T.reshape(T.take(phi_u, inv.ravel()), Y.shape[:2] + phi_u.shape[1:])
        prod = T.mul(phi, T.reshape(v, (B, 1) + v.shape[1:]))
        return T.tsum(prod, axis=2)

    def predict(self, params, feats, Y, chunk: int = 64) -> np.ndarray:
        """Forward pass without a tape, batched over samples."""
        feats = np.asarray(feats)
        Y = np.asarray(Y, dtype=np.float64)
        if Y.ndim == 3 and np.all(Y == Y[:1]):
            Y = Y[0]
        outs = []
        for i in range(0, len(feats), chunk):
            Yi = Y if Y.ndim == 2 else Y[i:i + chunk]
            outs.append(self.forward(params, feats[i:i + chunk], Yi).values)
        return np.concatenate(outs, axis=0)

    # --- checkpoints ------------------------------------------------------------

    def save(self, path, params, extra_meta: dict | None = None) -> None:
        meta = {"format": CHECKPOINT_FORMAT, "config": json.loads(self.cfg.model_dump_json())}
        meta.update(extra_meta or {})
        container.save(path, params, meta)

    @classmethod
    def load(cls, path) -> tuple["Loca", dict[str, np.ndarray], dict]:
        arrays, meta = container.load(path)
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise ConfigError(f"{path} is not a model checkpoint")
        model = cls(LocaConfig.model_validate(meta["config"]))
        expected = model.param_shapes()
        if set(expected) != set(arrays):
            raise ConfigError(f"checkpoint parameters {sorted(arrays)} do not match config {sorted(expected)}")
        for k, shape in expected.items():
            if arrays[k].shape != shape:
                raise ConfigError(f"checkpoint {k} has shape {arrays[k].shape}, config expects {shape}")
        return model, arrays, meta


def watch_params(tape: GradientTape, params: dict[str, np.ndarray]) -> dict[str, Tensor]:
    return {k: tape.watch(v, k) for k, v in params.items()}


def check_finite(params: dict[str, np.ndarray]) -> None:
    for k, v in params.items():
        if not np.isfinite(v).all():
            raise NumericError(f"parameter {k} is not finite")
