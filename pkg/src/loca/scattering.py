"""Wavelet scattering encoder in 1D and 2D.

Morlet wavelets and a Gaussian low-pass are built on the periodic sampling
grid and stored in the Fourier domain.  Convolutions are circular.  The
wavelets share one rescaling constant chosen so that

    |phi_hat(w)|^2 + sum_lambda |psi_hat_lambda(w)|^2 <= 1

on every grid frequency, which makes each wavelet layer, and therefore the
whole transform, nonexpansive.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ConfigError, ShapeError

XI0 = 3 * np.pi / 4
SIGMA0 = 0.8


@dataclass(frozen=True)
class ScatteringConfig:
    J: int
    L: int = 8
    m0: int = 2
    input_shape: tuple[int, ...] = (128,)

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(m) for m in self.input_shape))
        if self.J < 1:
            raise ConfigError(f"J must be >= 1, got {self.J}")
        if self.L < 1:
            raise ConfigError(f"L must be >= 1, got {self.L}")
        if self.m0 not in (0, 1, 2):
            raise ConfigError(f"m0 must be 0, 1 or 2, got {self.m0}")
        if len(self.input_shape) not in (1, 2):
            raise ConfigError(f"only 1D and 2D grids are supported, got {self.input_shape}")
        if 2 ** self.J > min(self.input_shape):
            raise ConfigError(f"2**J = {2 ** self.J} exceeds grid extent {min(self.input_shape)}")

    @property
    def ndim(self) -> int:
        return len(self.input_shape)

    @property
    def n_angles(self) -> int:
        return 1 if self.ndim == 1 else self.L

    def paths(self) -> list[tuple[tuple[int, int], ...]]:
        """Admissible paths as tuples of (angle, scale) with increasing scale."""
        first = [(r, j) for j in range(self.J) for r in range(self.n_angles)]
        out: list[tuple[tuple[int, int], ...]] = [()]
        if self.m0 >= 1:
            out += [(lam,) for lam in first]
        if self.m0 >= 2:
            out += [(l1, l2) for l1 in first for l2 in first if l2[1] > l1[1]]
        return out

    @property
    def output_grid(self) -> tuple[int, ...]:
        step = 2 ** self.J
        return tuple(-(-m // step) for m in self.input_shape)

    @property
    def width(self) -> int:
        return len(self.paths()) * int(np.prod(self.output_grid))


def _periodic_offsets(m: int) -> np.ndarray:
    """Signed grid offsets in [-m/2, m/2) for a periodic axis of length m."""
    k = np.arange(m)
    return np.where(k < (m + 1) // 2, k, k - m).astype(np.float64)


def _periodized(fn, shape, n_images=2):
    """Sum ``fn`` over periodic images so filters wrap cleanly on the grid."""
    axes = [_periodic_offsets(m) for m in shape]
    out = np.zeros(shape, dtype=np.complex128)
    shifts = np.arange(-n_images, n_images + 1)
    grids = np.meshgrid(*axes, indexing="ij")
    for offs in np.array(np.meshgrid(*([shifts] * len(shape)), indexing="ij")).reshape(len(shape), -1).T:
        coords = [g + o * m for g, o, m in zip(grids, offs, shape)]
        out += fn(*coords)
    return out


def _morlet(shape, sigma, xi, theta=0.0, slant=1.0):
    if len(shape) == 1:
        def gabor(x):
            return np.exp(-x * x / (2 * sigma ** 2)) * np.exp(1j * xi * x)

        def envelope(x):
            return np.exp(-x * x / (2 * sigma ** 2)).astype(np.complex128)
    else:
        c, s = np.cos(theta), np.sin(theta)

        def quad(x, y):
            a = x * c + y * s
            b = -x * s + y * c
            return (a * a + slant ** 2 * b * b) / (2 * sigma ** 2), a

        def gabor(x, y):
            q, a = quad(x, y)
            return np.exp(-q) * np.exp(1j * xi * a)

        def envelope(x, y):
            return np.exp(-quad(x, y)[0]).astype(np.complex128)
    g = _periodized(gabor, shape)
    e = _periodized(envelope, shape)
    psi_hat = np.fft.fftn(g - (g.sum() / e.sum()) * e)
    return psi_hat / np.abs(psi_hat).max()


def _gaussian_lowpass(shape, sigma):
    def env(*xs):
        return np.exp(-sum(x * x for x in xs) / (2 * sigma ** 2)).astype(np.complex128)

    phi = _periodized(env, shape).real
    phi /= phi.sum()
    return np.fft.fftn(phi).real


@dataclass
class FilterBank:
    config: ScatteringConfig
    phi_hat: np.ndarray
    psi_hat: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)
    scale: float = 1.0

    def littlewood_paley(self) -> np.ndarray:
        lp = self.phi_hat ** 2
        for f in self.psi_hat.values():
            lp = lp + np.abs(f) ** 2
        return lp


def build_filterbank(cfg: ScatteringConfig) -> FilterBank:
    shape = cfg.input_shape
    phi_hat = _gaussian_lowpass(shape, SIGMA0 * 2 ** cfg.J)
    psi = {}
    slant = 4.0 / cfg.L
    for j in range(cfg.J):
        for r in range(cfg.n_angles):
            theta = np.pi * r / cfg.n_angles
            psi[(r, j)] = _morlet(shape, SIGMA0 * 2 ** j, XI0 / 2 ** j, theta, slant)
    wav = sum(np.abs(f) ** 2 for f in psi.values())
    room = 1.0 - phi_hat ** 2
    mask = wav > 1e-8 * wav.max()
    scale = min(1.0, float(np.sqrt(np.min(np.maximum(room[mask], 0.0) / wav[mask]))))
    for k in psi:
        psi[k] = psi[k] * scale
    return FilterBank(cfg, phi_hat, psi, scale)


class Scattering:
    """Fixed scattering encoder for one grid; call on ``(..., *input_shape)`` arrays."""

    def __init__(self, cfg: ScatteringConfig):
        self.config = cfg
        self.filters = build_filterbank(cfg)

    @cached_property
    def _axes(self):
        return tuple(range(-self.config.ndim, 0))

    def _subsample(self, x):
        step = 2 ** self.config.J
        idx = (Ellipsis,) + tuple(slice(0, None, step) for _ in range(self.config.ndim))
        return x[idx]

    def _lowpass(self, x_hat):
        return self._subsample(np.fft.ifftn(x_hat * self.filters.phi_hat, axes=self._axes).real)

    def __call__(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64)
        cfg = self.config
        nd = cfg.ndim
        if u.shape[-nd:] != cfg.input_shape:
            raise ShapeError(f"scattering expects trailing grid {cfg.input_shape}, got {u.shape}")
        lead = u.shape[:-nd]
        axes = self._axes
        psi = self.filters.psi_hat
        u_hat = np.fft.fftn(u, axes=axes)
        blocks = [self._lowpass(u_hat)]
        first = [(r, j) for j in range(cfg.J) for r in range(cfg.n_angles)]
        if cfg.m0 >= 1:
            u1_hat = {}
            for lam in first:
                u1 = np.abs(np.fft.ifftn(u_hat * psi[lam], axes=axes))
                u1_hat[lam] = np.fft.fftn(u1, axes=axes)
                blocks.append(self._lowpass(u1_hat[lam]))
            if cfg.m0 >= 2:
                for l1 in first:
                    for l2 in first:
                        if l2[1] <= l1[1]:
                            continue
                        u2 = np.abs(np.fft.ifftn(u1_hat[l1] * psi[l2], axes=axes))
                        blocks.append(self._lowpass(np.fft.fftn(u2, axes=axes)))
        out = np.stack(blocks, axis=len(lead))
        return out.reshape(lead + (-1,))


    def by_order(self, u) -> dict[int, np.ndarray]:
        """Coefficients split by path length: ``{order: (..., n_paths, prod(grid))}``."""
        out = self(u)
        paths = self.config.paths()
        out = out.reshape(out.shape[:-1] + (len(paths), -1))
        orders = np.array([len(p) for p in paths])
        return {k: out[..., orders == k, :] for k in sorted(set(orders.tolist()))}


def scatter(u_samples, cfg: ScatteringConfig) -> np.ndarray:
    return Scattering(cfg)(u_samples)
