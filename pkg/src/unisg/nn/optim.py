"""Adam."""
from __future__ import annotations

import numpy as np


class TrainingDivergence(FloatingPointError):
    pass


def adam_step(params, grads, state, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update.

    ``params`` and ``grads`` map names to arrays; params are updated in place.
    ``state`` holds the step count and moment estimates and is returned.
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingDivergence(f"non-finite gradient for {name}")
    t = state.get("t", 0) + 1
    m, v = state.setdefault("m", {}), state.setdefault("v", {})
    for name, g in grads.items():
        m[name] = beta1 * m.get(name, 0.0) + (1 - beta1) * g
        v[name] = beta2 * v.get(name, 0.0) + (1 - beta2) * g * g
        mhat = m[name] / (1 - beta1 ** t)
        vhat = v[name] / (1 - beta2 ** t)
        params[name] -= lr * mhat / (np.sqrt(vhat) + eps)
    state["t"] = t
    return state


class Adam:
    def __init__(self, params: dict, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.state = {}

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def step(self):
        grads = {k: (p.grad if p.grad is not None else np.zeros_like(p.data)) for k, p in self.params.items()}
        arrays = {k: p.data for k, p in self.params.items()}
        adam_step(arrays, grads, self.state, self.lr, self.beta1, self.beta2, self.eps)
