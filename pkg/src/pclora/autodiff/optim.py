"""AdamW with a cosine-annealed learning rate."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


def cosine_lr(base_lr: float, n: int, total: int, min_lr: float = 0.0) -> float:
    """Cosine annealing from ``base_lr`` at step 0 to ``min_lr`` at step ``total``."""
    if total <= 0:
        return base_lr
    n = min(max(n, 0), total)
    return min_lr + 0.5 * (base_lr - min_lr) * (1.0 + math.cos(math.pi * n / total))


@dataclass
class OptimizerState:
    lr: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.01
    total_steps: int | None = None  # None disables the cosine schedule
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def current_lr(self) -> float:
        if self.total_steps is None:
            return self.lr
        return cosine_lr(self.lr, self.step, self.total_steps)


class AdamW:
    """Decoupled weight decay Adam over a fixed parameter list.

    The learning rate used for update ``n`` (zero-based) is
    ``cosine_lr(lr, n, total_steps)`` when ``total_steps`` is given.
    """

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.01,
                 total_steps=None):
        self.params: list[Tensor] = list(params)
        self.state = OptimizerState(lr=lr, betas=tuple(betas), eps=eps, weight_decay=weight_decay,
                                    total_steps=total_steps)
        self.state.m = [np.zeros_like(p.data) for p in self.params]
        self.state.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> float:
        """Apply one update and return the learning rate it used."""
        lr = self.state.current_lr()
        adamw_step(self.params, self.state)
        return lr


def adamw_step(params: list[Tensor], state: OptimizerState) -> None:
    for p in params:
        if p.grad is None:
            raise ValueError(f"missing gradient for parameter {p!r}")
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    lr = state.current_lr()
    b1, b2 = state.betas
    t = state.step + 1
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    for p, m, v in zip(params, state.m, state.v):
        if m.shape != p.data.shape:
            raise ValueError("optimizer state does not match parameter shapes")
        g = p.grad
        p.data *= 1.0 - lr * state.weight_decay
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    state.step = t
