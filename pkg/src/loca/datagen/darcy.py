"""Darcy flow ``div(u grad s) = f`` on the unit square.

Cell-centred finite volumes on an ``N x N`` grid; array axis 0 is ``x1`` and
axis 1 is ``x2``.  Dirichlet ``s = 0`` on ``x1 = 0`` and ``x1 = 1``;
prescribed outward flux ``g(x1)`` on ``x2 = 0`` and ``x2 = 1``.
"""
from __future__ import annotations

import logging

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from ..errors import DataError, NumericError
from .samples import Dataset, sample_rng

log = logging.getLogger(__name__)

GRID = 32
RESIDUAL_TOL = 1e-10
MAX_RESAMPLES = 10


def cell_centers(N: int = GRID) -> np.ndarray:
    return (np.arange(N) + 0.5) / N


def default_forcing(x1, x2):
    return 5.0 * np.exp(-((x1 - 0.5) ** 2 + (x2 - 0.5) ** 2))


def default_flux(x1):
    return np.sin(5.0 * x1)


def _harmonic(a, b):
    return 2.0 * a * b / (a + b)


def darcy_operator(perm: np.ndarray) -> sp.csr_matrix:
    """Discrete ``div(u grad .)`` scaled by the cell area, Dirichlet rows folded in."""
    N = perm.shape[0]
    idx = np.arange(N * N).reshape(N, N)
    rows, cols, vals = [], [], []
    diag = np.zeros((N, N))
    t1 = _harmonic(perm[:-1, :], perm[1:, :])
    t2 = _harmonic(perm[:, :-1], perm[:, 1:])
    for t, a, b in ((t1, idx[:-1, :], idx[1:, :]), (t2, idx[:, :-1], idx[:, 1:])):
        rows += [a.ravel(), b.ravel()]
        cols += [b.ravel(), a.ravel()]
        vals += [t.ravel(), t.ravel()]
    diag[:-1, :] -= t1
    diag[1:, :] -= t1
    diag[:, :-1] -= t2
    diag[:, 1:] -= t2
    diag[0, :] -= 2.0 * perm[0, :]
    diag[-1, :] -= 2.0 * perm[-1, :]
    rows.append(idx.ravel())
    cols.append(idx.ravel())
    vals.append(diag.ravel())
    A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(N * N, N * N))
    return A.tocsr()


def darcy_rhs(N: int, forcing=default_forcing, flux=default_flux) -> np.ndarray:
    h = 1.0 / N
    c = cell_centers(N)
    X1, X2 = np.meshgrid(c, c, indexing="ij")
    b = np.asarray(forcing(X1, X2), dtype=np.float64) * h * h * np.ones((N, N))
    g = np.asarray(flux(c), dtype=np.float64) * h * np.ones(N)
    b[:, 0] -= g
    b[:, -1] -= g
    return b.ravel()


def darcy_solve(perm, forcing=default_forcing, flux=default_flux, return_residual: bool = False):
    """Pressure on the cell grid for permeability ``perm`` (``N x N``)."""
    perm = np.asarray(perm, dtype=np.float64)
    if perm.ndim != 2 or perm.shape[0] != perm.shape[1]:
        raise DataError(f"permeability must be a square grid, got {perm.shape}")
    if not np.isfinite(perm).all() or np.any(perm <= 0):
        raise DataError("permeability must be finite and strictly positive")
    N = perm.shape[0]
    A = darcy_operator(perm)
    b = darcy_rhs(N, forcing, flux)
    s = spsolve(A.tocsc(), b)
    if not np.isfinite(s).all():
        raise NumericError("Darcy system is singular")
    res = np.linalg.norm(A @ s - b) / max(np.linalg.norm(b), 1e-300)
    s = s.reshape(N, N)
    return (s, res) if return_residual else s


def kl_eigenvalues(N: int = GRID, scale: float = 7.0 ** 1.5, shift: float = 49.0,
                   power: float = 1.5, rel_cutoff: float = 1e-8) -> np.ndarray:
    """Eigenvalues of ``scale * (-Lap + shift)^-power`` on cosine modes ``k < N``.

    Modes below ``rel_cutoff`` times the largest eigenvalue are zeroed.
    """
    k = np.arange(N)
    K1, K2 = np.meshgrid(k, k, indexing="ij")
    lam = scale * (np.pi ** 2 * (K1 ** 2 + K2 ** 2) + shift) ** (-power)
    lam[lam < rel_cutoff * lam.max()] = 0.0
    return lam


def cosine_basis(N: int = GRID) -> np.ndarray:
    """``B[i, k] = c_k cos(pi k x_i)`` at cell centres, L2-normalized on [0, 1]."""
    c = cell_centers(N)
    k = np.arange(N)
    B = np.cos(np.pi * np.outer(c, k))
    B[:, 1:] *= np.sqrt(2.0)
    return B


def gaussian_field(rng: np.random.Generator, N: int = GRID) -> np.ndarray:
    """Karhunen-Loeve draw of the log-permeability on the cell grid."""
    lam = kl_eigenvalues(N)
    B = cosine_basis(N)
    xi = rng.standard_normal((N, N))
    return B @ (np.sqrt(lam) * xi) @ B.T


def darcy_permeability_sample(rng: np.random.Generator, N: int = GRID) -> np.ndarray:
    return np.exp(gaussian_field(rng, N))


def darcy_dataset(n: int, seed: int, N: int = GRID) -> Dataset:
    c = cell_centers(N)
    X1, X2 = np.meshgrid(c, c, indexing="ij")
    x = np.stack([X1.ravel(), X2.ravel()], axis=-1)
    us, ss = [], []
    rejected = 0
    for i in range(n):
        for sub in range(MAX_RESAMPLES):
            perm = darcy_permeability_sample(sample_rng(seed, i, sub), N)
            s, res = darcy_solve(perm, return_residual=True)
            if res <= RESIDUAL_TOL:
                break
            rejected += 1
        else:
            raise NumericError(f"sample {i}: Darcy residual above {RESIDUAL_TOL} after {MAX_RESAMPLES} draws")
        us.append(perm.ravel())
        ss.append(s.ravel())
    if rejected:
        log.warning("rejected %d Darcy samples on the residual check", rejected)
    u = np.stack(us)[..., None]
    s = np.stack(ss)[..., None]
    y = np.broadcast_to(x, (n,) + x.shape).copy()
    meta = {"generator": "darcy", "seed": seed, "grid": N, "rejected": rejected}
    return Dataset(x, u, y, s, (N, N), meta)
