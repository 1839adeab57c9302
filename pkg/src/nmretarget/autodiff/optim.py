"""Adam over named parameter dictionaries."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeMismatch


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update.

    Returns ``(new_params, new_state)``; inputs are not modified. Parameters
    missing from ``grads`` are treated as having zero gradient.
    """
    t = state.step + 1
    new_params, new_m, new_v = {}, {}, {}
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p)
        elif np.shape(g) != np.shape(p):
            raise ShapeMismatch(f"adam: gradient for {name!r} has shape {np.shape(g)}, "
                                f"parameter has {np.shape(p)}")
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p)
            v = np.zeros_like(p)
        elif m.shape != p.shape:
            raise ShapeMismatch(f"adam: state for {name!r} has shape {m.shape}, parameter has {p.shape}")
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * (g * g)
        new_params[name] = p - lr * (m / c1) / (np.sqrt(v / c2) + eps)
        new_m[name] = m
        new_v[name] = v
    return new_params, AdamState(t, new_m, new_v)
