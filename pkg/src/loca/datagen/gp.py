from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, NumericError

log = logging.getLogger(__name__)

MAX_JITTER_RETRIES = 8


@dataclass(frozen=True)
class GpSpec:
    """Zero-mean GP with covariance ``o * exp(-|x - x'|^2 / (2 l^2))``.

    ``jitter`` is relative to the amplitude.
    """

    length_scale: float
    amplitude: float = 1.0
    jitter: float = 1e-10

    def __post_init__(self):
        if self.length_scale <= 0 or self.amplitude <= 0 or self.jitter <= 0:
            raise ConfigError("GP length scale, amplitude and jitter must be positive")

    def covariance(self, grid) -> np.ndarray:
        grid = np.asarray(grid, dtype=np.float64)
        if grid.ndim == 1:
            grid = grid[:, None]
        d2 = np.sum((grid[:, None, :] - grid[None, :, :]) ** 2, axis=-1)
        return self.amplitude * np.exp(-0.5 * d2 / self.length_scale ** 2)


def gp_factor(spec: GpSpec, grid) -> np.ndarray:
    """Lower Cholesky factor of the jittered covariance, raising jitter on failure."""
    K = spec.covariance(grid)
    eye = np.eye(len(K))
    jitter = spec.jitter
    for attempt in range(MAX_JITTER_RETRIES + 1):
        try:
            return np.linalg.cholesky(K + jitter * spec.amplitude * eye)
        except np.linalg.LinAlgError:
            log.debug("cholesky failed with jitter %.1e (attempt %d)", jitter, attempt)
            jitter *= 10.0
    raise NumericError(f"GP covariance not factorizable even with jitter {jitter / 10:.1e}")


def gp_sample(spec: GpSpec, grid, rng: np.random.Generator, n: int | None = None,
              factor: np.ndarray | None = None) -> np.ndarray:
    """Draw one (``n=None``) or ``n`` sample paths on ``grid``."""
    L = gp_factor(spec, grid) if factor is None else factor
    z = rng.standard_normal(L.shape[0] if n is None else (L.shape[0], n))
    out = L @ z
    return out if n is None else out.T
