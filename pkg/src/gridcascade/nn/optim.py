"""Adam with bias correction, written against plain dicts of arrays."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class AdamHyper:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def optimizer_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState,
                   hyper: AdamHyper = AdamHyper()) -> tuple[dict[str, np.ndarray], AdamState]:
    """One Adam update. Returns new arrays; inputs are left untouched."""
    t = state.step + 1
    b1, b2 = hyper.beta1, hyper.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    new_params, m_out, v_out = {}, {}, {}
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p)
        m = state.m.get(name, np.zeros_like(p))
        v = state.v.get(name, np.zeros_like(p))
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        step = (m / c1) / (np.sqrt(v / c2) + hyper.eps)
        new_params[name] = (p - hyper.lr * step).astype(p.dtype, copy=False)
        m_out[name], v_out[name] = m.astype(p.dtype, copy=False), v.astype(p.dtype, copy=False)
    return new_params, AdamState(t, m_out, v_out)
