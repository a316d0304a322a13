"""Composite objective: task loss blended with feature distillation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .autodiff import Tensor, add, mse, scale
from .autodiff.tensor import as_tensor


@dataclass(frozen=True)
class FeaturePair:
    student: Tensor
    teacher: Tensor
    index: int = 0


@dataclass(frozen=True)
class LossBreakdown:
    task: float
    feat_kd: float
    total: float
    alpha: float


def feat_kd_loss(pairs: Sequence[FeaturePair]) -> Tensor:
    """Unweighted mean over tapped layers of the per-layer MSE.

    Teacher features are detached so nothing flows back into the teacher.
    """
    if not pairs:
        raise ValueError("feature distillation needs at least one layer pair")
    acc = None
    for p in pairs:
        if p.student.shape != p.teacher.shape:
            raise ValueError(f"layer {p.index}: student {list(p.student.shape)} vs teacher {list(p.teacher.shape)}")
        term = mse(p.student, p.teacher.detach())
        acc = term if acc is None else add(acc, term)
    return scale(acc, 1.0 / len(pairs))


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    return alpha


def total_loss(task: Tensor | float, feat_kd: Tensor | float, alpha: float) -> tuple[Tensor, LossBreakdown]:
    """``alpha * task + (1 - alpha) * feat_kd`` plus a float breakdown for logging.

    At the endpoints the graph contains only the surviving term, so alpha=1
    is bit-identical to optimizing the task loss alone.
    """
    alpha = _check_alpha(alpha)
    task, feat_kd = as_tensor(task), as_tensor(feat_kd)
    if alpha == 1.0:
        total = task
    elif alpha == 0.0:
        total = feat_kd
    else:
        total = add(scale(task, alpha), scale(feat_kd, 1.0 - alpha))
    return total, LossBreakdown(task.item(), feat_kd.item(), total.item(), alpha)
