"""Empirical-risk training, relative L2 metrics and error statistics."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .config import TrainConfig
from .datagen.samples import Dataset
from .errors import DataError, MetricUndefined, NumericError, ShapeError
from .model import Loca, check_finite, watch_params
from .numerics import tape as T
from .numerics.optim import AdamState, adam_step
from .numerics.tape import GradientTape, Tensor, backward

log = logging.getLogger(__name__)


def mse_loss(pred, truth) -> Tensor:
    """Sum of squared residuals over queries and channels, averaged over the batch."""
    pred = T._lift(pred)
    truth = np.asarray(truth.values if isinstance(truth, Tensor) else truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ShapeError(f"prediction {pred.shape} and truth {truth.shape} differ")
    r = T.sub(pred, truth)
    return T.tsum(T.square(r)) * (1.0 / pred.shape[0])


def relative_l2(pred, truth, squared: bool = False) -> float:
    """``|pred - truth| / |truth|`` over all queries and channels of one sample."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ShapeError(f"prediction {pred.shape} and truth {truth.shape} differ")
    den = np.linalg.norm(truth)
    if den == 0:
        raise MetricUndefined("relative error undefined for an all-zero truth")
    r = np.linalg.norm(pred - truth) / den
    return float(r * r) if squared else float(r)


@dataclass
class ErrorStats:
    errors: list[float]
    median: float
    q1: float
    q3: float
    whisker_low: float
    whisker_high: float
    outliers: list[float]
    mean: float
    std: float
    min: float
    max: float

    def summary(self) -> dict:
        d = asdict(self)
        d.pop("errors")
        d["count"] = len(self.errors)
        return d


def error_stats(errors) -> ErrorStats:
    e = np.asarray(errors, dtype=np.float64).ravel()
    if e.size == 0:
        raise DataError("error_stats needs at least one value")
    q1, med, q3 = np.percentile(e, [25, 50, 75])
    iqr = q3 - q1
    lo, hi = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = e[(e >= lo) & (e <= hi)]
    return ErrorStats(
        errors=e.tolist(), median=float(med), q1=float(q1), q3=float(q3),
        whisker_low=float(inside.min()), whisker_high=float(inside.max()),
        outliers=e[(e < lo) | (e > hi)].tolist(), mean=float(e.mean()), std=float(e.std()),
        min=float(e.min()), max=float(e.max()))


@dataclass
class TrainResult:
    params: dict[str, np.ndarray]
    history: list[tuple[int, float, float]] = field(default_factory=list)
    seconds: float = 0.0

    @property
    def final_loss(self) -> float:
        return self.history[-1][1]


def params_digest(params: dict[str, np.ndarray]) -> str:
    h = hashlib.sha256()
    for k in sorted(params):
        h.update(k.encode())
        h.update(np.ascontiguousarray(params[k], dtype="<f8").tobytes())
    return h.hexdigest()


def loss_and_grads(model: Loca, params, feats, Y, S):
    tape = GradientTape()
    tp = watch_params(tape, params)
    pred = model.forward(tp, feats, Y)
    loss = mse_loss(pred, S)
    return float(loss.values), backward(tape, loss)


def _batch_queries(y):
    return y[0] if np.all(y == y[:1]) else y


def train(model: Loca, data: Dataset, tcfg: TrainConfig, feats: np.ndarray | None = None,
          params: dict[str, np.ndarray] | None = None, progress=None) -> TrainResult:
    """Mini-batch Adam on the summed-squared-error loss.

    Batches are drawn with replacement across iterations from a generator
    seeded by ``tcfg.seed``.  A non-finite loss aborts with the iteration.
    """
    if len(data) == 0:
        raise DataError("empty training set")
    if feats is None:
        feats = model.encode(data.u_grid())
    if params is None:
        params = model.init_params(tcfg.seed)
    rng = np.random.default_rng(np.random.SeedSequence([tcfg.seed, 7]))
    state = AdamState(base_lr=tcfg.base_lr, decay_rate=tcfg.decay_rate, decay_every=tcfg.decay_every)
    B = min(tcfg.batch_size, len(data))
    history = []
    t0 = time.perf_counter()
    for it in range(tcfg.iterations):
        idx = rng.choice(len(data), size=B, replace=False) if B < len(data) else np.arange(B)
        lr = state.lr()
        try:
            loss, grads = loss_and_grads(model, params, feats[idx], _batch_queries(data.y[idx]), data.s[idx])
        except NumericError as exc:
            snap = {k: float(np.abs(v).max()) for k, v in params.items()}
            raise NumericError(f"iteration {it}: {exc}; max |param|: {json.dumps(snap)}") from exc
        if not np.isfinite(loss):
            raise NumericError(f"iteration {it}: loss is {loss}")
        params, state = adam_step(state, params, grads)
        history.append((it, loss, lr))
        if progress is not None:
            progress(it, loss, lr)
    check_finite(params)
    return TrainResult(params, history, time.perf_counter() - t0)


def evaluate(model: Loca, params, data: Dataset, feats: np.ndarray | None = None,
             squared: bool = False) -> ErrorStats:
    """Relative L2 error of every sample at its full query set."""
    if feats is None:
        feats = model.encode(data.u_grid())
    pred = model.predict(params, feats, data.y)
    errs = []
    for i in range(len(data)):
        try:
            errs.append(relative_l2(pred[i], data.s[i], squared))
        except MetricUndefined:
            log.warning("sample %d has zero-norm truth; excluded from metrics", i)
    return error_stats(errs)


def write_history(path, history) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "loss", "lr"])
        for it, loss, lr in history:
            w.writerow([it, repr(loss), repr(lr)])


def write_errors(path, errors) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample", "relative_l2"])
        for i, e in enumerate(errors):
            w.writerow([i, repr(float(e))])


def read_errors(path) -> np.ndarray:
    with Path(path).open() as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    return np.array([float(r["relative_l2"]) for r in rows])
