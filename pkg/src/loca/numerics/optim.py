from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, ShapeError


@dataclass
class AdamState:
    """Bias-corrected Adam with a staircase exponential learning-rate decay."""

    base_lr: float = 1e-3
    decay_rate: float = 0.99
    decay_every: int = 100
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.base_lr <= 0 or not 0 < self.decay_rate <= 1 or self.decay_every < 1:
            raise ConfigError("Adam needs base_lr > 0, decay_rate in (0, 1], decay_every >= 1")

    def lr(self, i: int | None = None) -> float:
        i = self.step if i is None else i
        return self.base_lr * self.decay_rate ** (i // self.decay_every)


def adam_step(state: AdamState, params: dict[str, np.ndarray],
              grads: dict[str, np.ndarray]) -> tuple[dict[str, np.ndarray], AdamState]:
    """Returns new parameter arrays; ``state`` moments are updated in place."""
    lr = state.lr()
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    out = {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {name!r} has shape {g.shape}, parameter {p.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        elif m.shape != p.shape:
            raise ShapeError(f"Adam moment for {name!r} has shape {m.shape}, parameter {p.shape}")
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        out[name] = np.asarray(p - lr * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon))
    return out, state
