"""Central-difference gradient checking."""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


def numeric_grad(loss_fn: Callable[[], Tensor], param: Tensor, eps: float = 1e-5) -> np.ndarray:
    out = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    og = out.reshape(-1)
    for j in range(flat.size):
        orig = flat[j]
        flat[j] = orig + eps
        fp = loss_fn().item()
        flat[j] = orig - eps
        fm = loss_fn().item()
        flat[j] = orig
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise FloatingPointError("loss is not finite during finite differencing")
        og[j] = (fp - fm) / (2.0 * eps)
    return out


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """Worst ``|a - n| / max(|a|, |n|, floor)`` over all entries."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float((np.abs(analytic - numeric) / denom).max(initial=0.0))


def grad_check(loss_fn: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-5,
               analytic: Sequence[np.ndarray] | None = None, floor: float = 1e-6) -> float:
    """Compare backprop gradients with central differences.

    ``loss_fn`` must rebuild the graph on each call. When ``analytic`` is
    given it replaces the backprop gradients (used for fault injection).
    Returns the worst relative error across all parameters.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    params = list(params)
    if analytic is None:
        for p in params:
            p.grad = None
        loss = loss_fn()
        if not math.isfinite(loss.item()):
            raise FloatingPointError("loss is not finite")
        loss.backward()
        analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    worst = 0.0
    for p, ga in zip(params, analytic):
        worst = max(worst, relative_error(ga, numeric_grad(loss_fn, p, eps), floor))
    return worst
