"""AdamW with decoupled weight decay and a cosine-annealed learning rate."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class OptimizerState:
    max_lr: float = 1e-5
    weight_decay: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    skipped: int = 0

    def copy(self) -> "OptimizerState":
        return OptimizerState(
            self.max_lr, self.weight_decay, self.beta1, self.beta2, self.eps, self.t,
            {k: a.copy() for k, a in self.m.items()}, {k: a.copy() for k, a in self.v.items()}, self.skipped,
        )


def adamw_step(params: dict, grads: dict, opt: OptimizerState, lr: float) -> bool:
    """Update ``params`` in place. Returns False (and skips) on a non-finite gradient."""
    if lr <= 0:
        raise ValueError("lr must be positive")
    if not all(np.all(np.isfinite(g)) for g in grads.values()):
        opt.skipped += 1
        return False
    opt.t += 1
    b1, b2 = opt.beta1, opt.beta2
    c1 = 1.0 - b1 ** opt.t
    c2 = 1.0 - b2 ** opt.t
    for name, p in params.items():
        g = grads[name]
        m = opt.m.get(name)
        if m is None:
            m = opt.m[name] = np.zeros_like(p)
            opt.v[name] = np.zeros_like(p)
        v = opt.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        update = (m / c1) / (np.sqrt(v / c2) + opt.eps) + opt.weight_decay * p
        p -= lr * update
    return True


def cosine_lr(step: int, total_steps: int, max_lr: float, min_lr: float | None = None) -> float:
    if total_steps <= 0 or not 0 <= step <= total_steps:
        raise ValueError(f"need 0 <= step <= total_steps, got {step}/{total_steps}")
    if min_lr is None:
        min_lr = max_lr / 100.0
    return min_lr + 0.5 * (max_lr - min_lr) * (1.0 + math.cos(math.pi * step / total_steps))


def clip_global_norm(grads: dict, max_norm: float = 10.0) -> tuple[dict, float, bool]:
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if not math.isfinite(norm) or norm <= max_norm:
        return grads, norm, False
    s = max_norm / norm
    return {k: g * s for k, g in grads.items()}, norm, True
