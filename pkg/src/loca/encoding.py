"""Query-coordinate positional encoding and the Fourier-projection encoder."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigError, ShapeError


@dataclass(frozen=True)
class PositionalEncodingConfig:
    H: int
    d_y: int = 1

    def __post_init__(self):
        if self.H < 2 or self.H % 2:
            raise ConfigError(f"positional encoding width H must be even and positive, got {self.H}")
        if self.d_y < 1:
            raise ConfigError(f"d_y must be positive, got {self.d_y}")

    @property
    def width(self) -> int:
        return self.H * self.d_y


def positional_encode(y, cfg: PositionalEncodingConfig) -> np.ndarray:
    """Encode coordinates in the unit box with dyadic sinusoids.

    For each coordinate ``y_i`` the block ``[i*H, (i+1)*H)`` holds the pairs
    ``cos(2**j pi y_i), sin(2**j pi y_i)`` for ``j = 1 .. H/2`` in order.

    Accepts ``(d_y,)`` or ``(..., d_y)`` and returns ``(..., H*d_y)``.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 0:
        y = y[None]
    if y.shape[-1] != cfg.d_y:
        raise ShapeError(f"expected trailing coordinate axis of size {cfg.d_y}, got {y.shape}")
    if not np.isfinite(y).all():
        raise ConfigError("non-finite query coordinates")
    freqs = np.pi * 2.0 ** np.arange(1, cfg.H // 2 + 1)
    angles = y[..., :, None] * freqs
    out = np.empty(y.shape[:-1] + (cfg.d_y, cfg.H // 2, 2))
    out[..., 0] = np.cos(angles)
    out[..., 1] = np.sin(angles)
    return out.reshape(y.shape[:-1] + (cfg.width,))


@dataclass(frozen=True)
class SpectralEncoderConfig:
    """Keep the lowest ``d`` real slots of the trigonometric expansion."""

    d: int

    def __post_init__(self):
        if self.d < 1:
            raise ConfigError(f"spectral encoder width must be >= 1, got {self.d}")

    @property
    def n_modes(self) -> int:
        return (self.d + 1) // 2


@lru_cache(maxsize=32)
def _mode_order(grid_shape: tuple[int, ...]) -> tuple[tuple[int, ...], ...]:
    """Non-redundant frequency vectors of a real signal, lowest first.

    One representative per conjugate pair (first nonzero component positive),
    strictly below Nyquist along every axis, sorted by squared norm then
    lexicographically.
    """
    ranges = [range(-((m - 1) // 2), (m - 1) // 2 + 1) for m in grid_shape]
    modes = []
    for k in itertools.product(*ranges):
        nz = [c for c in k if c != 0]
        if nz and nz[0] < 0:
            continue
        modes.append(k)
    modes.sort(key=lambda k: (sum(c * c for c in k), k))
    return tuple(modes)


def fourier_project(u_samples, cfg: SpectralEncoderConfig) -> np.ndarray:
    """Lowest-frequency trigonometric coefficients of ``u`` on a periodic grid.

    The DC slot is the grid mean; every other complex coefficient is scaled by
    ``2/m`` so a unit-amplitude cosine maps to a unit real part.  Slots are
    ``[Re c0, Im c0, Re c1, Im c1, ...]`` truncated to ``cfg.d``.
    """
    u = np.asarray(u_samples, dtype=np.float64)
    if u.ndim == 0 or u.size == 0:
        raise ShapeError("fourier_project needs a non-empty grid")
    modes = _mode_order(u.shape)
    if cfg.n_modes > len(modes):
        raise ConfigError(
            f"{cfg.n_modes} modes requested but only {len(modes)} are resolvable on grid {u.shape}")
    spec = np.fft.fftn(u) / u.size
    out = np.empty(2 * cfg.n_modes)
    for i, k in enumerate(modes[:cfg.n_modes]):
        c = spec[k]
        scale = 1.0 if not any(k) else 2.0
        out[2 * i] = scale * c.real
        out[2 * i + 1] = scale * c.imag
    return out[:cfg.d]
