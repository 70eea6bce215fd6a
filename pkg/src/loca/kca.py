"""Kernel-coupled attention: lifted RBF kernel, normalized coupling kernel,
quadrature rules, and the smoothed score transform.

Kernel functions accept numpy arrays or tape tensors and return tensors, so
the same code path serves inference and training.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np

from .errors import ConfigError, NumericError, ShapeError
from .numerics import tape as T
from .numerics.nn import softmax_columns
from .numerics.tape import Tensor

DENOM_FLOOR = 1e-12


@dataclass(frozen=True)
class KernelConfig:
    """Initial amplitude and inverse width of the RBF base kernel.

    Both are trained through their logarithms, so they stay positive.
    """

    gamma: float = 1.0
    beta: float = 1.0
    trainable: bool = True

    def __post_init__(self):
        if self.gamma <= 0 or self.beta <= 0:
            raise ConfigError("kernel gamma and beta must be positive")

    def log_params(self) -> dict[str, np.ndarray]:
        return {"kernel.log_gamma": np.array(np.log(self.gamma)),
                "kernel.log_beta": np.array(np.log(self.beta))}


@dataclass(frozen=True)
class QuadratureRule:
    kind: Literal["gauss_legendre", "monte_carlo"]
    nodes: np.ndarray
    weights: np.ndarray
    volume: float

    def __post_init__(self):
        if len(self.nodes) == 0:
            raise ConfigError("empty quadrature rule")
        if self.nodes.ndim != 2 or len(self.weights) != len(self.nodes):
            raise ShapeError(f"nodes {self.nodes.shape} and weights {self.weights.shape} disagree")
        if np.any(self.weights <= 0):
            raise ConfigError("quadrature weights must be positive")

    def __len__(self):
        return len(self.nodes)

    def rescaled(self, c: float) -> "QuadratureRule":
        return QuadratureRule(self.kind, self.nodes, self.weights * c, self.volume * c)


def _check_box(box) -> np.ndarray:
    box = np.asarray(box, dtype=np.float64).reshape(-1, 2)
    if np.any(box[:, 1] <= box[:, 0]):
        raise ConfigError(f"degenerate integration box {box.tolist()}")
    return box


def gauss_legendre_rule(q_per_dim: int, box=((0.0, 1.0),)) -> QuadratureRule:
    """Tensor-product Gauss-Legendre rule mapped onto an axis-aligned box."""
    if q_per_dim < 1:
        raise ConfigError(f"need at least one node per dimension, got {q_per_dim}")
    box = _check_box(box)
    x, w = np.polynomial.legendre.leggauss(q_per_dim)
    half = 0.5 * (box[:, 1] - box[:, 0])
    axes_x = [box[i, 0] + half[i] * (x + 1.0) for i in range(len(box))]
    axes_w = [half[i] * w for i in range(len(box))]
    nodes = np.stack([g.ravel() for g in np.meshgrid(*axes_x, indexing="ij")], axis=-1)
    weights = np.ones(1)
    for aw in axes_w:
        weights = np.multiply.outer(weights, aw).ravel()
    return QuadratureRule("gauss_legendre", nodes, weights, float(np.prod(2 * half)))


def monte_carlo_rule(points, box=((0.0, 1.0),)) -> QuadratureRule:
    """Equal-weight rule ``vol / P`` on the given points (queries may double as nodes)."""
    box = _check_box(box)
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    vol = float(np.prod(box[:, 1] - box[:, 0]))
    return QuadratureRule("monte_carlo", points, np.full(len(points), vol / len(points)), vol)


def sq_distances(Z, Zp) -> Tensor:
    """Pairwise squared distances ``|z_a - z'_b|^2`` over the last axis, clamped at 0."""
    Z, Zp = T._lift(Z), T._lift(Zp)
    if Z.shape[-1] != Zp.shape[-1]:
        raise ShapeError(f"lift widths differ: {Z.shape[-1]} vs {Zp.shape[-1]}")
    zz = T.tsum(T.square(Z), axis=-1, keepdims=True)
    pp = T.tsum(T.square(Zp), axis=-1, keepdims=True)
    cross = T.matmul(Z, T.transpose(Zp, _swap_last(Zp.ndim)))
    return T.maximum(zz - 2.0 * cross + T.transpose(pp, _swap_last(pp.ndim)), 0.0)


def _swap_last(ndim):
    axes = list(range(ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return tuple(axes)


def rbf_kernel(Z, Zp, log_gamma, log_beta) -> Tensor:
    """``gamma * exp(-beta * |z - z'|^2)`` for every pair of rows."""
    d2 = sq_distances(Z, Zp)
    return T.exp(log_gamma) * T.exp(T.neg(T.exp(log_beta) * d2))


def normalized_kernel(k_yz, k_zz, weights) -> Tensor:
    """Coupling kernel from precomputed base-kernel blocks.

    ``k_yz``: kernel between queries and nodes, ``(..., A, Q)``;
    ``k_zz``: kernel among nodes, ``(..., Q, Q)``; ``weights``: ``(Q,)``.
    """
    w = np.asarray(weights, dtype=np.float64)[:, None]
    den_y = T.matmul(k_yz, w)
    den_z = T.matmul(k_zz, w)
    if np.any(den_y.values < 0) or np.any(den_z.values < 0):
        raise NumericError("negative kernel integral; base kernel is not positive")
    root_y = T.sqrt(T.maximum(den_y, DENOM_FLOOR))
    root_z = T.sqrt(T.maximum(den_z, DENOM_FLOOR))
    return T.div(T.div(k_yz, root_y), T.transpose(root_z, _swap_last(root_z.ndim)))


def coupling_kernel(Y, rule: QuadratureRule, q: Callable, log_gamma, log_beta) -> Tensor:
    """Normalized kernel between query coordinates ``Y`` and the rule's nodes.

    ``q`` maps raw coordinates to lifted points (it is responsible for any
    positional encoding).  Both integrals in the normalization use ``rule``.
    """
    qy = q(Y)
    qz = q(rule.nodes)
    return coupling_kernel_lifted(qy, qz, rule, log_gamma, log_beta)


def coupling_kernel_lifted(qy, qz, rule: QuadratureRule, log_gamma, log_beta,
                           aliased: bool = False) -> Tensor:
    """As :func:`coupling_kernel` for already-lifted points.

    With ``aliased=True`` the queries are the integration nodes and the base
    kernel matrix is computed once.
    """
    k_zz = rbf_kernel(qz, qz, log_gamma, log_beta)
    k_yz = k_zz if aliased else rbf_kernel(qy, qz, log_gamma, log_beta)
    return normalized_kernel(k_yz, k_zz, rule.weights)


def coupling_gram(qy, qz, rule: QuadratureRule, log_gamma, log_beta) -> Tensor:
    """Normalized kernel among the queries themselves, ``(..., P, P)``.

    ``kappa(y, y') = k(y, y') / sqrt(int k(y, z) dz * int k(y', z) dz)`` with
    the integrals taken over ``rule``; symmetric positive semi-definite.
    """
    w = np.asarray(rule.weights, dtype=np.float64)[:, None]
    den = T.matmul(rbf_kernel(qy, qz, log_gamma, log_beta), w)
    inv = T.div(1.0, T.sqrt(T.maximum(den, DENOM_FLOOR)))
    k_yy = rbf_kernel(qy, qy, log_gamma, log_beta)
    # exact symmetry: average the two summation orders, scale by an outer product
    k_yy = (k_yy + T.transpose(k_yy, _swap_last(k_yy.ndim))) * 0.5
    return T.mul(k_yy, T.matmul(inv, T.transpose(inv, _swap_last(inv.ndim))))


def kca_transform(g_nodes, kappa, rule: QuadratureRule) -> Tensor:
    """Smoothed scores ``sum_q w_q kappa[p, q] g[q]``.

    ``g_nodes``: ``(..., Q, n, d_s)``; ``kappa``: ``(..., P, Q)``.  Returns
    ``(..., P, n, d_s)``.
    """
    g_nodes, kappa = T._lift(g_nodes), T._lift(kappa)
    Q = len(rule)
    if g_nodes.ndim < 3 or g_nodes.shape[-3] != Q or kappa.shape[-1] != Q:
        raise ShapeError(f"kca_transform: g {g_nodes.shape}, kappa {kappa.shape}, {Q} nodes")
    n, d_s = g_nodes.shape[-2:]
    flat = T.reshape(g_nodes, g_nodes.shape[:-2] + (n * d_s,))
    weighted = T.mul(flat, rule.weights[:, None])
    out = T.matmul(kappa, weighted)
    return T.reshape(out, out.shape[:-1] + (n, d_s))


def attention_weights(g_tilde) -> Tensor:
    """Column softmax of smoothed scores: every (query, channel) slice sums to one."""
    return softmax_columns(g_tilde)
