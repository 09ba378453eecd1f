from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 128
    max_epochs: int = 100
    patience: int = 15
    weight_decay: float = 0.01
    seed: int = 15
    validation_fraction: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.patience >= self.max_epochs:
            raise ValueError("patience must be smaller than max_epochs")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in (0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")


@dataclass
class OptimState:
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    step: int = 0

    @classmethod
    def for_params(cls, params):
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], 0)


def adamw_step(params, grads, state: OptimState, cfg: TrainConfig):
    """One AdamW update with decoupled weight decay.

    ``params`` and ``grads`` are lists of arrays; the returned list holds new
    arrays and ``state`` is advanced in place.  A ``None`` gradient counts as zero.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimizer state differ in length")
    state.step += 1
    lr, b1, b2 = cfg.learning_rate, cfg.beta1, cfg.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            g = np.zeros_like(p)
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        p = p - lr * cfg.weight_decay * p
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g
        p = p - lr * (state.m[i] / c1) / (np.sqrt(state.v[i] / c2) + cfg.eps)
        out.append(p)
    return out


class AdamW:
    def __init__(self, params, cfg: TrainConfig):
        self.params = list(params)
        self.cfg = cfg
        self.state = OptimState.for_params([p.data for p in self.params])

    def step(self):
        new = adamw_step(
            [p.data for p in self.params], [p.grad for p in self.params], self.state, self.cfg
        )
        for p, value in zip(self.params, new):
            p.data = value

    def zero_grad(self):
        for p in self.params:
            p.grad = None
