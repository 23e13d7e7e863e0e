from dataclasses import dataclass, field

import numpy as np

from .tensor import ContractError


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, state):
    """One bias-corrected Adam update of every trainable parameter, then zero the grads."""
    params = [p for p in params if getattr(p, "trainable", p.requires_grad)]
    for p in params:
        if p.grad is None:
            raise ContractError(f"parameter {getattr(p, 'name', '?')!r} has no gradient")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for i, p in enumerate(params):
        g = p.grad
        m = state.m.get(i)
        if m is None:
            m = state.m[i] = np.zeros_like(p.data)
            state.v[i] = np.zeros_like(p.data)
        elif m.shape != p.shape:
            raise ContractError(f"moment buffer shape {m.shape} != parameter shape {p.shape}")
        v = state.v[i]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p.data -= (state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype, copy=False)
        g.fill(0)
