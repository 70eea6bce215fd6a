"""Fast invariant checks bundled with the package (``loca selftest``)."""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .config import LocaConfig, QuadratureConfig
from .kca import coupling_gram, gauss_legendre_rule
from .model import Loca
from .scattering import Scattering, ScatteringConfig


@dataclass
class Check:
    name: str
    ok: bool
    detail: str
    seconds: float


def _small_model(**kw) -> Loca:
    base = dict(n=8, l=6, H=4, d_y=1, d_s=1, input_shape=(32,), g_width=12, f_width=12, q_width=12,
                quadrature=QuadratureConfig(q_per_dim=10))
    base.update(kw)
    return Loca(LocaConfig(**base))


def check_simplex(rng) -> tuple[bool, str]:
    m = _small_model()
    worst = 0.0
    low = np.inf
    for seed in range(5):
        params = m.init_params(seed)
        phi = m.attention(params, rng.random((50, 1))).values
        worst = max(worst, float(np.abs(phi.sum(axis=-2) - 1).max()))
        low = min(low, float(phi.min()))
    return low >= 0 and worst <= 1e-12, f"min {low:.3g}, max |sum-1| {worst:.3g}"


def check_kernel_psd(rng) -> tuple[bool, str]:
    rule = gauss_legendre_rule(12)
    worst_sym, worst_eig = 0.0, 0.0
    for _ in range(5):
        W = rng.normal(size=(1, 4))
        q = lambda y: np.tanh(y @ W)
        qz, qy = q(rule.nodes), q(rng.random((40, 1)))
        kap = coupling_gram(qy, qz, rule, 0.0, 0.0).values
        ev = np.linalg.eigvalsh((kap + kap.T) / 2)
        worst_sym = max(worst_sym, float(np.abs(kap - kap.T).max()))
        worst_eig = max(worst_eig, float(-ev.min() / ev.max()))
    return worst_sym <= 1e-12 and worst_eig <= 1e-8, f"asym {worst_sym:.3g}, -min/max eig {worst_eig:.3g}"


def check_quadrature(rng) -> tuple[bool, str]:
    worst = 0.0
    for Q in range(1, 11):
        r = gauss_legendre_rule(Q)
        for k in range(2 * Q):
            exact = 1.0 / (k + 1)
            worst = max(worst, abs(float(r.weights @ r.nodes[:, 0] ** k) - exact) / exact)
    return worst <= 1e-13, f"max relative error {worst:.3g}"


def check_scattering(rng) -> tuple[bool, str]:
    sc = Scattering(ScatteringConfig(J=3, L=8, m0=2, input_shape=(64,)))
    u, v = rng.normal(size=(2, 20, 64))
    ratio = np.linalg.norm(sc(u) - sc(v), axis=-1) / np.linalg.norm(u - v, axis=-1)
    const = np.abs(sc.by_order(np.full(64, 3.0))[1]).max()
    return ratio.max() <= 1.05 and const <= 1e-8, f"max ratio {ratio.max():.3f}, constant first order {const:.2g}"


def check_gradient(rng) -> tuple[bool, str]:
    from .model import watch_params
    from .numerics.tape import GradientTape, backward
    from .trainer import mse_loss

    m = _small_model(n=4, l=3, g_width=5, f_width=5, q_width=5, quadrature=QuadratureConfig(q_per_dim=6))
    params = m.init_params(3)
    feats = m.encode(rng.normal(size=(3, 32)))
    Y, S = rng.random((7, 1)), rng.normal(size=(3, 7, 1))

    def loss(p):
        return float(mse_loss(m.forward(p, feats, Y), S).values)

    tape = GradientTape()
    grads = backward(tape, mse_loss(m.forward(watch_params(tape, params), feats, Y), S))
    worst = 0.0
    for name in ("f.1.W", "g.0.W", "kernel.log_beta"):
        p = params[name]
        idx = np.unravel_index(rng.integers(p.size), p.shape)
        h = 1e-6
        plus = {**params, name: p.copy()}
        minus = {**params, name: p.copy()}
        plus[name][idx] += h
        minus[name][idx] -= h
        fd = (loss(plus) - loss(minus)) / (2 * h)
        worst = max(worst, abs(fd - grads[name][idx]) / max(abs(fd), 1e-8))
    return worst < 1e-5, f"max relative error {worst:.3g}"


CHECKS: dict[str, Callable] = {
    "simplex": check_simplex,
    "kernel-psd": check_kernel_psd,
    "quadrature": check_quadrature,
    "scattering": check_scattering,
    "gradient": check_gradient,
}


def run_all(seed: int = 0) -> list[Check]:
    out = []
    for name, fn in CHECKS.items():
        t0 = time.perf_counter()
        ok, detail = fn(np.random.default_rng(seed))
        out.append(Check(name, bool(ok), detail, time.perf_counter() - t0))
    return out
