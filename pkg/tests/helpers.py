"""Finite-difference oracles shared by the gradient tests."""
import numpy as np

from loca.numerics.tape import GradientTape, backward


def analytic_grads(fn, params):
    tape = GradientTape()
    watched = {k: tape.watch(v, k) for k, v in params.items()}
    return backward(tape, fn(watched))


def fd_grad(fn, params, name, h_rel=1e-6):
    """Central differences of ``fn`` with step ``h_rel * max(1, |theta|)``."""
    base = np.asarray(params[name], dtype=np.float64)
    grad = np.zeros_like(base, dtype=np.float64)
    for idx in np.ndindex(base.shape):
        h = h_rel * max(1.0, abs(float(base[idx])))
        plus, minus = np.array(base), np.array(base)
        plus[idx] += h
        minus[idx] -= h
        fp = float(fn({**params, name: plus}).values)
        fm = float(fn({**params, name: minus}).values)
        grad[idx] = (fp - fm) / (2 * h)
    return grad


def rel_err(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-300))
