"""Antiderivative benchmark: ``s(x) = int_0^x u``, ``u`` drawn from a GP."""
from __future__ import annotations

import numpy as np
from scipy.integrate import cumulative_trapezoid

from ..errors import ConfigError
from .gp import GpSpec, gp_factor, gp_sample
from .samples import Dataset, sample_rng

FINE_POINTS = 500
SENSORS = 100


def antiderivative_solve(u_samples, x=None) -> np.ndarray:
    """Composite-trapezoid cumulative integral with ``s(0) = 0``.

    ``u_samples`` is ``(..., m)`` on a uniform grid of ``[0, 1]`` unless
    ``x`` gives the grid explicitly.
    """
    u = np.asarray(u_samples, dtype=np.float64)
    m = u.shape[-1]
    if m < 2:
        raise ConfigError("antiderivative needs at least two grid points")
    if x is None:
        return cumulative_trapezoid(u, dx=1.0 / (m - 1), axis=-1, initial=0.0)
    return cumulative_trapezoid(u, x=np.asarray(x, dtype=np.float64), axis=-1, initial=0.0)


def _restrict(fine_x, values, sensors):
    return np.stack([np.interp(sensors, fine_x, v) for v in values])


def antiderivative_dataset(n: int, seed: int, length_scale: float = 0.1, amplitude: float = 1.0,
                           m: int = SENSORS, fine: int = FINE_POINTS) -> Dataset:
    """Inputs and outputs at ``m`` sensors after integrating on a ``fine`` grid."""
    fine_x = np.linspace(0.0, 1.0, fine)
    sensors = np.linspace(0.0, 1.0, m)
    spec = GpSpec(length_scale, amplitude)
    L = gp_factor(spec, fine_x)
    u_fine = np.stack([gp_sample(spec, fine_x, sample_rng(seed, i), factor=L) for i in range(n)])
    return _assemble(fine_x, sensors, u_fine, {
        "generator": "antiderivative", "seed": seed, "length_scale": length_scale,
        "amplitude": amplitude, "fine_points": fine, "sensors": m})


def antiderivative_multiscale_dataset(n: int, seed: int, m: int = SENSORS, fine: int = FINE_POINTS,
                                      log_l_range=(-2.0, 1.0), log_o_range=(-2.0, 2.0)) -> Dataset:
    """Each sample gets its own ``l = 10**delta`` and ``o = 10**zeta``."""
    fine_x = np.linspace(0.0, 1.0, fine)
    sensors = np.linspace(0.0, 1.0, m)
    u_fine, ls, os_ = [], [], []
    for i in range(n):
        rng = sample_rng(seed, i)
        l = 10.0 ** rng.uniform(*log_l_range)
        o = 10.0 ** rng.uniform(*log_o_range)
        u_fine.append(gp_sample(GpSpec(l, o), fine_x, rng))
        ls.append(l)
        os_.append(o)
    ds = _assemble(fine_x, sensors, np.stack(u_fine), {
        "generator": "antiderivative-multiscale", "seed": seed, "fine_points": fine, "sensors": m,
        "log10_length_scale_range": list(log_l_range), "log10_amplitude_range": list(log_o_range)})
    ds.meta["length_scales"] = [float(v) for v in ls]
    ds.meta["amplitudes"] = [float(v) for v in os_]
    return ds


def _assemble(fine_x, sensors, u_fine, meta) -> Dataset:
    s_fine = antiderivative_solve(u_fine, fine_x)
    u = _restrict(fine_x, u_fine, sensors)[..., None]
    s = _restrict(fine_x, s_fine, sensors)[..., None]
    n = len(u)
    x = sensors[:, None]
    y = np.broadcast_to(x, (n,) + x.shape).copy()
    return Dataset(x, u, y, s, (len(sensors),), meta)
