"""Rewrite the frozen golden vectors (run only after the gradient checks pass)."""
import json
from pathlib import Path

import numpy as np

from loca.config import preset
from loca.model import Loca
from loca.numerics.nn import MlpSpec, init_mlp, mlp_forward

HERE = Path(__file__).parent


def mlp_golden():
    params = init_mlp(MlpSpec(10, 100, 2, 100), np.random.default_rng(1234), "g")
    out = mlp_forward(params, "g", np.linspace(-1, 1, 10)[None]).values[0]
    return {"seed": 1234, "output": out.tolist()}


def model_golden():
    model = Loca(preset("antiderivative").model)
    params = model.init_params(7)
    x = np.linspace(0, 1, 100)
    u = np.sin(2 * np.pi * x) + 0.5 * np.cos(6 * np.pi * x)
    v = model.input_features(params, model.encode(u[None])).values[0, :, 0]
    pred = model.forward(params, model.encode(u[None]), x[:, None]).values[0, :, 0]
    return {"seed": 7, "v": v.tolist(), "prediction": pred.tolist()}


if __name__ == "__main__":
    (HERE / "mlp_g.json").write_text(json.dumps(mlp_golden()))
    (HERE / "model_antiderivative.json").write_text(json.dumps(model_golden()))
