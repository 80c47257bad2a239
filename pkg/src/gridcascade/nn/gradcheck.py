"""Central finite-difference gradient checks."""
from __future__ import annotations

import numpy as np

from .tensor import Tensor, mul, total


def numeric_grad(f, x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central differences of scalar ``f`` at ``x`` (float64)."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.size):
        old = x.flat[i]
        x.flat[i] = old + step
        hi = f(x)
        x.flat[i] = old - step
        lo = f(x)
        x.flat[i] = old
        g.flat[i] = (hi - lo) / (2 * step)
    return g


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-6) -> float:
    """Norm-relative error; ``floor`` keeps identically-zero gradients (e.g. key bias) from dividing by noise."""
    scale = max(np.linalg.norm(a), np.linalg.norm(b), floor)
    return float(np.linalg.norm(a - b) / scale)


def check_op(op, inputs: dict[str, np.ndarray], seed: int = 0, step: float = 1e-5) -> dict[str, float]:
    """Compare autograd against finite differences for every input of ``op``.

    ``op`` takes Tensors by keyword and returns a Tensor; non-scalar outputs are
    contracted with a fixed random weight so the check covers the whole Jacobian.
    """
    rng = np.random.default_rng(seed)
    probe = op(**{k: Tensor(v) for k, v in inputs.items()}).data
    weight = rng.normal(size=probe.shape)

    def scalar(**arrays):
        out = op(**{k: Tensor(v) for k, v in arrays.items()})
        return float((out.data * weight).sum())

    tensors = {k: Tensor(np.array(v, dtype=np.float64), requires_grad=True) for k, v in inputs.items()}
    total(mul(op(**tensors), weight)).backward()
    errors = {}
    for name, arr in inputs.items():
        def f(x, name=name):
            return scalar(**{**inputs, name: x})

        num = numeric_grad(f, arr, step)
        ana = tensors[name].grad if tensors[name].grad is not None else np.zeros_like(arr)
        errors[name] = relative_error(ana, num)
    return errors
