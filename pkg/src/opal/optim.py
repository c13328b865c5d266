"""SGD with Nesterov momentum and a cosine-decayed learning rate.

The schedule follows lr(t) = lr0 * cos(7*pi*t / (16*T)), which decays
smoothly from lr0 at t=0 to about 0.195*lr0 at t=T without ever reaching
zero. Weight decay is folded into the gradient before the momentum update
(coupled decay); bias vectors are exempt, which callers arrange by the
parameter naming convention below.

Update rule per parameter p with gradient g:

    g      = g + weight_decay * p        (decay skipped for *.b names)
    v      = momentum * v + g
    step   = g + momentum * v            if nesterov
    step   = v                           otherwise
    p      = p - lr(t) * step
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["OptimizerState", "cosine_lr", "sgd_step"]


def cosine_lr(t, total_steps, lr0):
    """Learning rate at step t of a planned total_steps-step run."""
    if total_steps <= 0:
        raise ValueError("total_steps must be positive")
    if t < 0 or t > total_steps:
        raise ValueError(f"step t={t} outside [0, {total_steps}]")
    return lr0 * math.cos(7.0 * math.pi * t / (16.0 * total_steps))


@dataclass
class OptimizerState:
    lr0: float = 3e-4
    total_steps: int = 1
    t: int = 0
    momentum: float = 0.9
    weight_decay: float = 5e-4
    nesterov: bool = True
    velocity: dict = field(default_factory=dict)

    def current_lr(self):
        # past the planned horizon the rate floors at its final value
        return cosine_lr(min(self.t, self.total_steps), self.total_steps, self.lr0)


def _decayed(name):
    return not name.endswith(".b")


def sgd_step(params, grads, state):
    """One optimizer step over the named parameter tensors in `grads`.

    Parameters absent from `grads` are untouched (no decay either): a loss
    that never reads a head must leave that head alone. Mutates `params`
    and `state` in place and returns `params`.
    """
    lr = state.current_lr()
    for name in grads:
        p = params[name]
        g = grads[name].astype(p.dtype, copy=False)
        if state.weight_decay != 0.0 and _decayed(name):
            g = g + p * p.dtype.type(state.weight_decay)
        v = state.velocity.get(name)
        if v is None:
            v = np.zeros_like(p)
        v = state.momentum * v + g
        state.velocity[name] = v
        step = g + state.momentum * v if state.nesterov else v
        params[name] = p - p.dtype.type(lr) * step
    state.t += 1
    return params
