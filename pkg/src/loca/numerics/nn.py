"""Network primitives built on the tape: activations, column softmax, MLPs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, NumericError, ShapeError
from . import tape as T
from .tape import Tensor

gelu = T.gelu


def softmax_columns(scores) -> Tensor:
    """Softmax over the ``n`` rows of an ``(..., n, d_s)`` score array.

    Each of the ``d_s`` columns becomes a probability vector over the ``n``
    latent features.
    """
    scores = T._lift(scores)
    if scores.ndim < 2:
        raise ShapeError(f"expected (..., n, d_s) scores, got shape {scores.shape}")
    if scores.shape[-2] == 0:
        raise ShapeError("softmax_columns on an empty feature axis")
    return T.softmax(scores, axis=-2)


def glorot_normal_init(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    if fan_in < 1 or fan_out < 1:
        raise ConfigError(f"glorot init needs positive fans, got ({fan_in}, {fan_out})")
    std = np.sqrt(2.0 / (fan_in + fan_out))
    return rng.normal(0.0, std, size=(fan_in, fan_out))


@dataclass(frozen=True)
class MlpSpec:
    """Fully connected net: ``depth`` hidden GELU layers of ``width`` units."""

    in_dim: int
    out_dim: int
    depth: int
    width: int

    def layer_dims(self) -> list[tuple[int, int]]:
        dims = [self.in_dim] + [self.width] * self.depth + [self.out_dim]
        return list(zip(dims[:-1], dims[1:]))


def init_mlp(spec: MlpSpec, rng: np.random.Generator, prefix: str) -> dict[str, np.ndarray]:
    params = {}
    for i, (fi, fo) in enumerate(spec.layer_dims()):
        params[f"{prefix}.{i}.W"] = glorot_normal_init(rng, fi, fo)
        params[f"{prefix}.{i}.b"] = np.zeros(fo)
    return params


def mlp_forward(params: dict, prefix: str, x, n_layers: int | None = None) -> Tensor:
    """Alternating affine and GELU layers; the last layer is affine only.

    ``params`` maps ``{prefix}.{i}.W`` / ``{prefix}.{i}.b`` to arrays or
    tracked tensors.
    """
    if n_layers is None:
        n_layers = sum(1 for k in params if k.startswith(prefix + ".") and k.endswith(".W"))
    if n_layers == 0:
        raise ConfigError(f"no layers found for {prefix!r}")
    h = x
    for i in range(n_layers):
        W = params[f"{prefix}.{i}.W"]
        b = params[f"{prefix}.{i}.b"]
        width_in = W.shape[0]
        if h.shape[-1] != width_in:
            raise ShapeError(f"{prefix} layer {i}: input width {h.shape[-1]} != {width_in}")
        try:
            h = T.add(T.matmul(h, W), b)
        except NumericError as exc:
            raise NumericError(f"{prefix} layer {i}: {exc}") from exc
        if i < n_layers - 1:
            h = T.gelu(h)
    return h
