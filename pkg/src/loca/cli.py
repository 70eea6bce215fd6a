"""``loca`` command line: generate, train, evaluate, sweep, selftest.

Every run directory has the layout::

    <out>/config.json          resolved experiment config
    <out>/data/train.loca      training set (labels subsampled if configured)
    <out>/data/test.loca       full-resolution test set
    <out>/data/test_noisy.loca test set with injected noise (if configured)
    <out>/checkpoint.loca      trained parameters
    <out>/history.csv          iteration, loss, lr
    <out>/errors.csv           per-sample relative L2 errors
    <out>/quantiles.csv        boxplot-ready statistics
    <out>/summary.json         ErrorStats fields plus provenance

Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric abort,
5 sweep finished with failed variants.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .config import (ExperimentConfig, SweepConfig, load_experiment, load_sweep, parse_experiment, preset)
from .datagen import (Dataset, antiderivative_dataset, antiderivative_multiscale_dataset, darcy_dataset,
                      noisy_dataset, subsample_dataset)
from .errors import ConfigError, DataError, LocaError
from .model import Loca
from .trainer import ErrorStats, error_stats, evaluate, params_digest, read_errors, train

log = logging.getLogger("loca")

OUT_ROOT_ENV = "LOCA_OUT_ROOT"
EXIT_PARTIAL = 5


# --- provenance ---------------------------------------------------------------

def provenance(cfg: ExperimentConfig) -> dict:
    return {"config_hash": cfg.config_hash(), "data_hash": cfg.data_hash(), "seed": cfg.seed,
            "train_seed": cfg.train.seed, "data_seed": cfg.data.seed}


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _write_json(path: Path, obj) -> None:
    _write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _csv_text(header, rows, prov: dict) -> str:
    lines = [f"# config_hash={prov['config_hash']} seed={prov['seed']}", ",".join(header)]
    lines += [",".join(repr(v) if isinstance(v, float) else str(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def resolve_out(cfg: ExperimentConfig, out: str | None) -> Path:
    if out:
        return Path(out)
    path = Path(cfg.out_dir)
    root = os.environ.get(OUT_ROOT_ENV)
    return path if path.is_absolute() or not root else Path(root) / path


# --- data -----------------------------------------------------------------------

def _test_seed(seed: int) -> int:
    return 2 * seed + 1


def build_datasets(cfg: ExperimentConfig) -> dict[str, Dataset]:
    """Train set, clean test set and (optionally) a noisy copy of the test set."""
    d = cfg.data
    tr_seed, te_seed = 2 * d.seed, _test_seed(d.seed)
    if d.generator == "antiderivative":
        train_ds = antiderivative_dataset(d.n_train, tr_seed, d.length_scale, d.amplitude)
        test_ds = antiderivative_dataset(d.n_test, te_seed, d.test_length_scale or d.length_scale, d.amplitude)
    elif d.generator == "antiderivative-multiscale":
        train_ds = antiderivative_multiscale_dataset(d.n_train, tr_seed)
        test_ds = antiderivative_multiscale_dataset(d.n_test, te_seed)
    else:
        train_ds = darcy_dataset(d.n_train, tr_seed)
        test_ds = darcy_dataset(d.n_test, te_seed)
    if d.label_fraction < 1:
        train_ds = subsample_dataset(train_ds, d.label_fraction, d.seed)
    out = {"train": train_ds, "test": test_ds}
    if d.test_noise_sigma > 0:
        out["test_noisy"] = noisy_dataset(test_ds, d.test_noise_sigma, d.test_noise_target, d.seed)
    return out


def cmd_generate(cfg: ExperimentConfig, out: Path, data_dir: Path | None = None) -> dict[str, Path]:
    data_dir = data_dir or out / "data"
    prov = provenance(cfg)
    paths = {}
    for name, ds in build_datasets(cfg).items():
        ds.meta.update(prov, role=name)
        path = data_dir / f"{name}.loca"
        ds.save(path)
        paths[name] = path
        log.info("wrote %s: u %s, s %s", path, ds.u.shape, ds.s.shape)
    _write_json(data_dir / "data_config.json", {**cfg.data.model_dump(mode="json"), "data_hash": cfg.data_hash()})
    return paths


def _load_split(data_dir: Path, name: str) -> Dataset:
    path = data_dir / f"{name}.loca"
    if not path.exists():
        raise DataError(f"missing dataset {path}; run `loca generate` first")
    return Dataset.load(path)


def _check_compatible(model: Loca, ds: Dataset, what: str) -> None:
    if tuple(ds.input_shape) != tuple(model.cfg.input_shape):
        raise ConfigError(f"{what} has input grid {ds.input_shape}, model expects {model.cfg.input_shape}")
    if ds.y.shape[-1] != model.cfg.d_y or ds.s.shape[-1] != model.cfg.d_s:
        raise ConfigError(f"{what} has d_y={ds.y.shape[-1]}, d_s={ds.s.shape[-1]}; "
                          f"model expects {model.cfg.d_y}, {model.cfg.d_s}")


# --- train / evaluate ---------------------------------------------------------------

def cmd_train(cfg: ExperimentConfig, out: Path, data_dir: Path | None = None) -> Path:
    data_dir = data_dir or out / "data"
    ds = _load_split(data_dir, "train")
    model = Loca(cfg.model)
    _check_compatible(model, ds, "training set")
    prov = provenance(cfg)
    _write_text(out / "config.json", cfg.to_json() + "\n")

    def progress(it, loss, lr):
        if it % 1000 == 0:
            log.info("iter %d loss %.6g lr %.3g", it, loss, lr)

    result = train(model, ds, cfg.train, progress=progress)
    log.info("trained %d iterations in %.1f s", cfg.train.iterations, result.seconds)
    ckpt = out / "checkpoint.loca"
    model.save(ckpt, result.params, {**prov, "iterations": cfg.train.iterations,
                                     "final_loss": result.final_loss,
                                     "params_digest": params_digest(result.params)})
    _write_text(out / "history.csv", _csv_text(["iteration", "loss", "lr"], result.history, prov))
    return ckpt


def _summary(stats: ErrorStats, prov: dict, dataset: str) -> dict:
    return {**stats.summary(), **prov, "dataset": dataset}


def _quantile_rows(stats: ErrorStats):
    return [[k, getattr(stats, k)] for k in ("min", "whisker_low", "q1", "median", "q3", "whisker_high", "max")]


def evaluate_split(model, params, ds: Dataset, squared: bool, out: Path, stem: str, prov: dict) -> ErrorStats:
    _check_compatible(model, ds, stem)
    stats = evaluate(model, params, ds, squared=squared)
    _write_text(out / f"{stem}errors.csv",
                _csv_text(["sample", "relative_l2"], list(enumerate(stats.errors)), prov))
    _write_text(out / f"{stem}quantiles.csv", _csv_text(["statistic", "value"], _quantile_rows(stats), prov))
    return stats


def cmd_evaluate(cfg: ExperimentConfig, out: Path, checkpoint: Path | None = None,
                 dataset: Path | None = None, baseline: Path | None = None,
                 data_dir: Path | None = None) -> dict:
    data_dir = data_dir or out / "data"
    checkpoint = checkpoint or out / "checkpoint.loca"
    if not checkpoint.exists():
        raise DataError(f"missing checkpoint {checkpoint}; run `loca train` first")
    model, params, meta = Loca.load(checkpoint)
    if model.cfg != cfg.model:
        raise ConfigError(f"checkpoint {checkpoint} was trained with a different model config "
                          f"(hash {meta.get('config_hash')}, this config {cfg.config_hash()})")
    prov = provenance(cfg)
    squared = cfg.train.metric == "squared"
    summary = {}
    if dataset is not None:
        stats = evaluate_split(model, params, Dataset.load(dataset), squared, out, "", prov)
        summary = _summary(stats, prov, str(dataset))
    else:
        stats = evaluate_split(model, params, _load_split(data_dir, "test"), squared, out, "", prov)
        summary = _summary(stats, prov, "test")
        noisy = data_dir / "test_noisy.loca"
        if noisy.exists():
            nstats = evaluate_split(model, params, Dataset.load(noisy), squared, out, "noisy_", prov)
            summary["noisy"] = _summary(nstats, prov, "test_noisy")
            if stats.mean > 0:
                summary["noise_mean_increase_pct"] = 100.0 * (nstats.mean / stats.mean - 1.0)
    _write_json(out / "summary.json", summary)
    if baseline is not None:
        _write_json(out / "ablation_report.json", ablation_report(summary, baseline))
    return summary


def ablation_report(summary: dict, baseline: Path) -> dict:
    """Compare this run's mean error with a baseline run's ``summary.json``."""
    baseline = Path(baseline)
    if baseline.is_dir():
        baseline = baseline / "summary.json"
    try:
        other = json.loads(baseline.read_text())
    except FileNotFoundError:
        raise DataError(f"baseline summary {baseline} not found") from None
    return {"mean": summary["mean"], "baseline_mean": other["mean"],
            "ratio_baseline_over_mean": other["mean"] / summary["mean"],
            "median": summary["median"], "baseline_median": other["median"],
            "config_hash": summary["config_hash"], "baseline_config_hash": other["config_hash"],
            "seed": summary["seed"]}


def run_experiment(cfg: ExperimentConfig, out: Path, data_dir: Path | None = None) -> dict:
    data_dir = data_dir or out / "data"
    if not (data_dir / "train.loca").exists():
        cmd_generate(cfg, out, data_dir)
    cmd_train(cfg, out, data_dir)
    return cmd_evaluate(cfg, out, data_dir=data_dir)


# --- sweep --------------------------------------------------------------------------

def _fmt(v) -> str:
    return str(v).replace("/", "_")


def sweep_variants(sw: SweepConfig, root: Path) -> list[tuple[object, int, ExperimentConfig, Path, Path]]:
    out = []
    for value in sw.values:
        for seed in sw.seeds:
            overrides = {sw.parameter: value, **{f: seed for f in sw.seed_fields}}
            cfg = sw.base.with_overrides(**overrides)
            run_dir = root / f"{sw.parameter}={_fmt(value)}" / f"seed{seed}"
            data_dir = root / "data" / cfg.data_hash()
            out.append((value, seed, cfg, run_dir, data_dir))
    return out


def _run_variant(args):
    value, seed, cfg_json, run_dir, data_dir = args
    cfg = parse_experiment(json.loads(cfg_json))
    try:
        summary = run_experiment(cfg, Path(run_dir), Path(data_dir))
        return value, seed, summary, None
    except LocaError as exc:
        return value, seed, None, f"{type(exc).__name__}: {exc}"


def cmd_sweep(sw: SweepConfig, root: Path, workers: int = 1) -> tuple[Path, int]:
    variants = sweep_variants(sw, root)
    jobs = [(v, s, c.to_json(), str(r), str(d)) for v, s, c, r, d in variants]
    # variants that share data generate it once, before any worker starts
    for _, _, cfg, _, data_dir in variants:
        if not (data_dir / "train.loca").exists():
            try:
                cmd_generate(cfg, data_dir.parent, data_dir)
            except LocaError as exc:
                # reported again, per variant, when the variant retries generation
                log.warning("data generation for %s failed: %s", data_dir.name, exc)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_variant, jobs))
    else:
        results = [_run_variant(j) for j in jobs]
    rows, failures = [], []
    for value in sw.values:
        mine = [r for r in results if r[0] == value]
        ok = [r[2] for r in mine if r[2] is not None]
        failures += [{"value": r[0], "seed": r[1], "error": r[3]} for r in mine if r[3] is not None]
        if ok:
            med = np.array([s["median"] for s in ok])
            mean = np.array([s["mean"] for s in ok])
            # each test sample's error averaged over seeds, then summarized
            pooled = error_stats(np.mean([_errors_of(r, root, sw) for r in mine if r[2] is not None], axis=0))
            rows.append([value, len(ok), len(mine) - len(ok), float(med.mean()), float(med.std()),
                         float(mean.mean()), pooled.median, pooled.q1, pooled.q3, pooled.mean])
        else:
            rows.append([value, 0, len(mine)] + [float("nan")] * 7)
    prov = {"config_hash": sw.base.config_hash(), "seed": ",".join(map(str, sw.seeds))}
    header = [sw.parameter, "n_ok", "n_failed", "median_mean", "median_std", "mean_mean",
              "seed_avg_median", "seed_avg_q1", "seed_avg_q3", "seed_avg_mean"]
    path = root / "sweep.csv"
    _write_text(path, _csv_text(header, rows, prov))
    _write_json(root / "sweep_failures.json", failures)
    return path, len(failures)


def _errors_of(result, root: Path, sw: SweepConfig) -> np.ndarray:
    value, seed = result[0], result[1]
    return read_errors(root / f"{sw.parameter}={_fmt(value)}" / f"seed{seed}" / "errors.csv")


def read_sweep(path) -> list[dict]:
    with Path(path).open() as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    return rows


# --- entry point --------------------------------------------------------------------

def _load_config(args) -> ExperimentConfig:
    if args.config and args.preset:
        raise ConfigError("give either --config or --preset, not both")
    if args.config:
        cfg = load_experiment(args.config)
    elif args.preset:
        cfg = preset(args.preset)
    else:
        raise ConfigError("a --config file or --preset name is required")
    overrides = dict(_parse_set(s) for s in args.set or [])
    if args.seed is not None:
        overrides.update({"seed": args.seed, "train.seed": args.seed, "data.seed": args.seed})
    return cfg.with_overrides(**overrides) if overrides else cfg


def _parse_set(item: str):
    if "=" not in item:
        raise ConfigError(f"--set expects key=value, got {item!r}")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="loca", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp, config=True):
        sp.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
        if config:
            sp.add_argument("--config", help="experiment config (JSON)")
            sp.add_argument("--preset", help="shipped experiment preset name")
            sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                            help="dotted config override, e.g. train.iterations=500")
            sp.add_argument("--seed", type=int, help="override seed, train.seed and data.seed")
        sp.add_argument("--out", help=f"output directory (default: config out_dir under ${OUT_ROOT_ENV})")
        sp.add_argument("--threads", type=int, default=1, help="BLAS threads; sweep worker processes")

    common(sub.add_parser("generate", help="write train/test datasets"))
    common(sub.add_parser("train", help="train on a generated dataset"))
    ev = sub.add_parser("evaluate", help="per-sample errors and summary for a checkpoint")
    common(ev)
    ev.add_argument("--checkpoint", help="default: <out>/checkpoint.loca")
    ev.add_argument("--dataset", help="default: <out>/data/test.loca (and test_noisy.loca)")
    ev.add_argument("--baseline", help="run dir or summary.json to compare mean errors with")
    run = sub.add_parser("run", help="generate (if needed), train and evaluate")
    common(run)
    sw = sub.add_parser("sweep", help="run every variant of a sweep config")
    sw.add_argument("--config", required=True, help="sweep config (JSON)")
    common(sw, config=False)
    st = sub.add_parser("selftest", help="run the bundled invariant checks")
    st.add_argument("--seed", type=int, default=0)
    sub.add_parser("preset", help="print a preset config as JSON").add_argument("name")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with threadpool_limits(limits=max(1, getattr(args, "threads", 1))):
            return _dispatch(args)
    except LocaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DataError.exit_code


def _dispatch(args) -> int:
    if args.verb == "selftest":
        from .selftest import run_all
        checks = run_all(args.seed)
        for c in checks:
            print(f"{'PASS' if c.ok else 'FAIL'} {c.name}: {c.detail} ({c.seconds:.2f} s)")
        return 0 if all(c.ok for c in checks) else 1
    if args.verb == "preset":
        print(preset(args.name).to_json())
        return 0
    if args.verb == "sweep":
        sw = load_sweep(args.config)
        root = Path(args.out) if args.out else resolve_out(sw.base.model_copy(update={"out_dir": sw.out_dir}), None)
        path, failed = cmd_sweep(sw, root, args.threads)
        print(path)
        if failed:
            print(f"{failed} variant(s) failed; see {root / 'sweep_failures.json'}", file=sys.stderr)
            return EXIT_PARTIAL
        return 0
    cfg = _load_config(args)
    out = resolve_out(cfg, args.out)
    if args.verb == "generate":
        for path in cmd_generate(cfg, out).values():
            print(path)
    elif args.verb == "train":
        print(cmd_train(cfg, out))
    elif args.verb == "evaluate":
        summary = cmd_evaluate(cfg, out, Path(args.checkpoint) if args.checkpoint else None,
                               Path(args.dataset) if args.dataset else None,
                               Path(args.baseline) if args.baseline else None)
        print(json.dumps({k: summary[k] for k in ("median", "mean", "q1", "q3", "count")}))
    elif args.verb == "run":
        summary = run_experiment(cfg, out)
        print(json.dumps({k: summary[k] for k in ("median", "mean", "q1", "q3", "count")}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
