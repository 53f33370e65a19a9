"""AdamW with linear warm-up and cosine decay.

Defaults mirror the pretraining recipe: base learning rate 1e-4, betas
(0.9, 0.95), 6 warm-up epochs, cosine decay to zero.  Weight decay (default
0.05) applies to the 2D weight matrices only, never to biases, layer-norm
parameters or the mask token.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ADAM_EPS = 1e-8


@dataclass
class OptimizerState:
    """Per-parameter first/second moment accumulators and the step counter."""

    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0
    base_lr: float = 1e-4
    betas: tuple = (0.9, 0.95)
    weight_decay: float = 0.05
    warmup_epochs: int = 6

    @classmethod
    def for_params(cls, params: dict, **kwargs) -> "OptimizerState":
        state = cls(**kwargs)
        state.m = {k: np.zeros_like(p) for k, p in params.items()}
        state.v = {k: np.zeros_like(p) for k, p in params.items()}
        return state


def lr_at_step(step: int, warmup_steps: int, total_steps: int, base_lr: float) -> float:
    """Scheduled learning rate: 0 at step 0, linear to base_lr over the
    warm-up, then cosine decay to 0 at total_steps."""
    if warmup_steps > 0 and step < warmup_steps:
        return base_lr * step / warmup_steps
    span = max(total_steps - warmup_steps, 1)
    progress = min(max(step - warmup_steps, 0) / span, 1.0)
    return base_lr * 0.5 * (1.0 + np.cos(np.pi * progress))


def adamw_step(params: dict, grads: dict, state: OptimizerState, lr: float) -> None:
    """One in-place update over every gradient; lr 0 leaves params unchanged."""
    b1, b2 = state.betas
    state.step += 1
    t = state.step
    for name, g in grads.items():
        p = params[name]
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * (g * g)
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        update = m_hat / (np.sqrt(v_hat) + ADAM_EPS)
        if state.weight_decay and p.ndim >= 2:
            update = update + state.weight_decay * p
        p -= (lr * update).astype(p.dtype)
