"""Operator samples, datasets, label subsampling and noise injection."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np

from ..errors import ConfigError, DataError
from ..numerics import container

FORMAT = "loca-dataset"
FORMAT_VERSION = 1


def sample_rng(seed: int, index: int, sub: int = 0) -> np.random.Generator:
    """Independent stream for one sample, derived from (seed, index, sub-seed)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index), int(sub)]))


@dataclass
class OperatorSample:
    """One discretized input/output function pair."""

    x: np.ndarray  # (m, d_x)
    u: np.ndarray  # (m, d_u)
    y: np.ndarray  # (M, d_y)
    s: np.ndarray  # (M, d_s)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("x", "u", "y", "s"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.ndim == 1:
                arr = arr[:, None]
            setattr(self, name, arr)
        if len(self.x) < 1 or len(self.y) < 1:
            raise DataError("samples need at least one input and one output location")
        if len(self.x) != len(self.u) or len(self.y) != len(self.s):
            raise DataError("location and value arrays disagree in length")
        if not all(np.isfinite(getattr(self, n)).all() for n in ("x", "u", "y", "s")):
            raise DataError("non-finite values in sample")


@dataclass
class Dataset:
    """``N`` samples sharing fixed input locations ``x``.

    ``u``: ``(N, m, d_u)``; ``y``: ``(N, M, d_y)``; ``s``: ``(N, M, d_s)``.
    ``input_shape`` is the grid layout of the ``m`` input locations.
    """

    x: np.ndarray
    u: np.ndarray
    y: np.ndarray
    s: np.ndarray
    input_shape: tuple[int, ...]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.input_shape = tuple(int(v) for v in self.input_shape)
        n = len(self.u)
        if not (len(self.y) == len(self.s) == n):
            raise DataError("u, y, s disagree on the number of samples")
        if int(np.prod(self.input_shape)) != self.u.shape[1] or len(self.x) != self.u.shape[1]:
            raise DataError(f"input grid {self.input_shape} does not match {self.u.shape[1]} sensors")

    def __len__(self):
        return len(self.u)

    def sample(self, i: int) -> OperatorSample:
        return OperatorSample(self.x, self.u[i], self.y[i], self.s[i], dict(self.meta))

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        if idx.size == 0:
            idx = idx.astype(np.intp)
        return replace(self, u=self.u[idx], y=self.y[idx], s=self.s[idx], meta=dict(self.meta))

    def u_grid(self) -> np.ndarray:
        """Single-channel inputs reshaped to ``(N, *input_shape)``."""
        return self.u[..., 0].reshape((len(self),) + self.input_shape)

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (self.x, self.u, self.y, self.s):
            h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return h.hexdigest()

    @classmethod
    def from_samples(cls, samples: list[OperatorSample], input_shape, meta=None) -> "Dataset":
        return cls(samples[0].x, np.stack([s.u for s in samples]), np.stack([s.y for s in samples]),
                   np.stack([s.s for s in samples]), input_shape, dict(meta or {}))

    def save(self, path) -> None:
        meta = dict(self.meta)
        meta.update(format=FORMAT, format_version=FORMAT_VERSION, input_shape=list(self.input_shape))
        container.save(path, {"x": self.x, "u": self.u, "y": self.y, "s": self.s}, meta)

    @classmethod
    def load(cls, path) -> "Dataset":
        arrays, meta = container.load(path)
        if meta.get("format") != FORMAT:
            raise DataError(f"{path} is not a dataset file")
        if meta.get("format_version") != FORMAT_VERSION:
            raise DataError(f"unsupported dataset version {meta.get('format_version')}")
        missing = {"x", "u", "y", "s"} - arrays.keys()
        if missing:
            raise DataError(f"dataset {path} lacks arrays {sorted(missing)}")
        shape = meta.pop("input_shape")
        meta.pop("format")
        meta.pop("format_version")
        return cls(arrays["x"], arrays["u"], arrays["y"], arrays["s"], shape, meta)


def subsample_labels(sample: OperatorSample, fraction: float, rng: np.random.Generator) -> OperatorSample:
    """Keep ``floor(fraction * M)`` query/value pairs drawn without replacement."""
    if not 0 < fraction <= 1:
        raise ConfigError(f"label fraction must lie in (0, 1], got {fraction}")
    M = len(sample.y)
    P = int(np.floor(fraction * M + 1e-9))
    if P < 1:
        raise ConfigError(f"fraction {fraction} keeps no labels out of {M}")
    if P == M:
        idx = np.arange(M)
    else:
        idx = np.sort(rng.choice(M, size=P, replace=False))
    meta = dict(sample.meta, label_fraction=fraction)
    return OperatorSample(sample.x, sample.u, sample.y[idx], sample.s[idx], meta)


def subsample_dataset(ds: Dataset, fraction: float, seed: int) -> Dataset:
    """Per-sample independent label subsampling."""
    out = [subsample_labels(ds.sample(i), fraction, sample_rng(seed, i, 1)) for i in range(len(ds))]
    meta = dict(ds.meta, label_fraction=fraction, label_seed=seed)
    return Dataset.from_samples(out, ds.input_shape, meta)


Target = Literal["inputs", "outputs", "both"]


def add_noise(sample: OperatorSample, sigma: float, target: Target, rng: np.random.Generator) -> OperatorSample:
    """Add i.i.d. ``N(0, sigma^2)`` noise to the selected value arrays."""
    if sigma < 0:
        raise ConfigError(f"noise sigma must be >= 0, got {sigma}")
    if target not in ("inputs", "outputs", "both"):
        raise ConfigError(f"unknown noise target {target!r}")
    u, s = sample.u, sample.s
    if sigma > 0:
        if target in ("inputs", "both"):
            u = u + rng.normal(0.0, sigma, size=u.shape)
        if target in ("outputs", "both"):
            s = s + rng.normal(0.0, sigma, size=s.shape)
    meta = dict(sample.meta, noise_sigma=sigma, noise_target=target)
    return OperatorSample(sample.x, u.copy(), sample.y, s.copy(), meta)


def noisy_dataset(ds: Dataset, sigma: float, target: Target, seed: int) -> Dataset:
    out = [add_noise(ds.sample(i), sigma, target, sample_rng(seed, i, 2)) for i in range(len(ds))]
    meta = dict(ds.meta, noise_sigma=sigma, noise_target=target, noise_seed=seed)
    return Dataset.from_samples(out, ds.input_shape, meta)
