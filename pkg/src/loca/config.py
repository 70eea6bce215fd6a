"""Experiment configuration schema and the shipped experiment presets.

Configs are JSON files validated by pydantic; unknown keys are rejected.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError

SCHEMA_VERSION = 1


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class EncoderConfig(_Strict):
    kind: Literal["scattering", "fourier"] = "scattering"
    J: int = Field(4, ge=1)
    L: int = Field(8, ge=1)
    m0: int = Field(2, ge=0, le=2)
    d: int = Field(64, ge=1, description="fourier encoder width")


class QuadratureConfig(_Strict):
    kind: Literal["gauss_legendre", "monte_carlo"] = "gauss_legendre"
    q_per_dim: int = Field(64, ge=1)
    box: list[tuple[float, float]] = [(0.0, 1.0)]


class LocaConfig(_Strict):
    n: int = Field(100, ge=1)
    l: int = Field(100, ge=1)
    H: int = Field(10, ge=2)
    d_y: int = Field(1, ge=1)
    d_s: int = Field(1, ge=1)
    input_shape: tuple[int, ...] = (100,)
    encoder: EncoderConfig = EncoderConfig()
    g_depth: int = Field(2, ge=0)
    g_width: int = Field(100, ge=1)
    f_depth: int = Field(1, ge=0)
    f_width: int = Field(500, ge=1)
    q_depth: int = Field(2, ge=0)
    q_width: int = Field(100, ge=1)
    quadrature: QuadratureConfig = QuadratureConfig()
    kca: bool = True
    query_coords: bool = Field(True, description="append raw y to its positional encoding")
    gamma: float = Field(1.0, gt=0)
    beta: float = Field(1.0, gt=0)

    @model_validator(mode="after")
    def _check(self):
        if self.H % 2:
            raise ValueError("H must be even")
        if len(self.quadrature.box) != self.d_y:
            raise ValueError(f"quadrature box has {len(self.quadrature.box)} axes, d_y is {self.d_y}")
        return self


class TrainConfig(_Strict):
    batch_size: int = Field(100, ge=1)
    iterations: int = Field(20000, ge=1)
    base_lr: float = Field(1e-3, gt=0)
    decay_rate: float = Field(0.99, gt=0, le=1)
    decay_every: int = Field(100, ge=1)
    seed: int = 0
    eval_every: int = Field(0, ge=0)
    metric: Literal["relative", "squared"] = "relative"


class DataConfig(_Strict):
    generator: Literal["antiderivative", "antiderivative-multiscale", "darcy"] = "antiderivative"
    n_train: int = Field(1000, ge=1)
    n_test: int = Field(1000, ge=1)
    seed: int = 0
    length_scale: float = Field(0.1, gt=0)
    test_length_scale: Optional[float] = Field(None, gt=0)
    amplitude: float = Field(1.0, gt=0)
    label_fraction: float = Field(1.0, gt=0, le=1)
    test_noise_sigma: float = Field(0.0, ge=0)
    test_noise_target: Literal["inputs", "outputs", "both"] = "inputs"


Experiment = Literal["antiderivative", "antiderivative-ood", "antiderivative-multiscale", "darcy",
                     "darcy-ablation", "darcy-noise"]


class ExperimentConfig(_Strict):
    schema_version: Literal[1] = SCHEMA_VERSION
    experiment: Experiment = "antiderivative"
    seed: int = 0
    data: DataConfig = DataConfig()
    model: LocaConfig = LocaConfig()
    train: TrainConfig = TrainConfig()
    out_dir: str = "runs/default"

    def to_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), indent=2, sort_keys=True)

    def config_hash(self) -> str:
        canon = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def data_hash(self) -> str:
        canon = json.dumps(self.data.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def with_overrides(self, **dotted) -> "ExperimentConfig":
        """Copy with ``section.field`` style overrides, validated again."""
        raw = self.model_dump(mode="json")
        for key, value in dotted.items():
            set_dotted(raw, key, value)
        return parse_experiment(raw)


class SweepConfig(_Strict):
    schema_version: Literal[1] = SCHEMA_VERSION
    base: ExperimentConfig
    parameter: str
    values: list
    seeds: list[int] = [0]
    seed_fields: list[str] = ["train.seed"]
    out_dir: str = "runs/sweep"

    @model_validator(mode="after")
    def _check(self):
        if not self.values:
            raise ValueError("sweep needs at least one value")
        if not self.seeds:
            raise ValueError("sweep needs at least one seed")
        return self


def set_dotted(raw: dict, key: str, value) -> None:
    parts = key.split(".")
    node = raw
    for p in parts[:-1]:
        if p not in node or not isinstance(node[p], dict):
            raise ConfigError(f"unknown config section {key!r}")
        node = node[p]
    if parts[-1] not in node:
        raise ConfigError(f"unknown config key {key!r}")
    node[parts[-1]] = value


def _format_errors(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{loc}: {err['msg']}")
    return "; ".join(lines)


def parse_experiment(raw: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from None


def parse_sweep(raw: dict) -> SweepConfig:
    try:
        return SweepConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from None


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


def load_experiment(path) -> ExperimentConfig:
    return parse_experiment(_read_json(path))


def load_sweep(path) -> SweepConfig:
    return parse_sweep(_read_json(path))


# Architectures per benchmark: g/f/q depth x width, latent size n, encoding size H, lift width l.
ANTIDERIVATIVE_MODEL = LocaConfig(
    n=100, l=100, H=10, d_y=1, d_s=1, input_shape=(100,),
    encoder=EncoderConfig(kind="scattering", J=4, L=8, m0=2),
    g_depth=2, g_width=100, f_depth=1, f_width=500, q_depth=2, q_width=100,
    quadrature=QuadratureConfig(kind="gauss_legendre", q_per_dim=64, box=[(0.0, 1.0)]),
)

DARCY_MODEL = LocaConfig(
    n=100, l=100, H=6, d_y=2, d_s=1, input_shape=(32, 32),
    encoder=EncoderConfig(kind="scattering", J=1, L=2, m0=2),
    g_depth=2, g_width=100, f_depth=2, f_width=100, q_depth=2, q_width=100,
    quadrature=QuadratureConfig(kind="gauss_legendre", q_per_dim=16, box=[(0.0, 1.0), (0.0, 1.0)]),
)


def preset(name: str, **overrides) -> ExperimentConfig:
    """Runnable config for one of the shipped experiments."""
    if name == "antiderivative":
        cfg = ExperimentConfig(experiment=name, model=ANTIDERIVATIVE_MODEL,
                               data=DataConfig(generator="antiderivative", length_scale=0.1),
                               train=TrainConfig(iterations=20000), out_dir=f"runs/{name}")
    elif name == "antiderivative-ood":
        cfg = ExperimentConfig(experiment=name, model=ANTIDERIVATIVE_MODEL,
                               data=DataConfig(generator="antiderivative", length_scale=0.5,
                                               test_length_scale=0.1),
                               train=TrainConfig(iterations=20000), out_dir=f"runs/{name}")
    elif name == "antiderivative-multiscale":
        cfg = ExperimentConfig(experiment=name, model=ANTIDERIVATIVE_MODEL,
                               data=DataConfig(generator="antiderivative-multiscale"),
                               train=TrainConfig(iterations=20000), out_dir=f"runs/{name}")
    elif name in ("darcy", "darcy-ablation", "darcy-noise"):
        model = DARCY_MODEL
        if name == "darcy-ablation":
            model = model.model_copy(update={"kca": False})
        data = DataConfig(generator="darcy", n_train=200, n_test=200, label_fraction=0.015,
                          test_noise_sigma=0.15 if name == "darcy-noise" else 0.0)
        cfg = ExperimentConfig(experiment=name, model=model, data=data,
                               train=TrainConfig(iterations=20000), out_dir=f"runs/{name}")
    else:
        raise ConfigError(f"unknown preset {name!r}")
    return cfg.with_overrides(**overrides) if overrides else cfg
