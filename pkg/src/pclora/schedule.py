"""Decay factor schedules for the frozen path.

``lambda(n) = 1 - f(n, q)`` for ``n < q`` and exactly 0 afterwards, with

* linear:            f = n / q
* sine:              f = sin(pi n / 2q)
* one_minus_cosine:  f = 1 - cos(pi n / 2q)

Sine drops fastest early on, one_minus_cosine holds near 1 longest.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

logger = logging.getLogger(__name__)

KINDS = ("sine", "one_minus_cosine", "linear")
_ALIASES = {"one-cosine": "one_minus_cosine", "1-cosine": "one_minus_cosine", "cosine": "one_minus_cosine"}

RECOMMENDED_FRACTION = (0.4, 0.8)


def normalize_kind(kind: str) -> str:
    kind = _ALIASES.get(kind, kind)
    if kind not in KINDS:
        raise ValueError(f"unknown decay kind {kind!r}; expected one of {', '.join(KINDS)}")
    return kind


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class DecaySpec:
    kind: str
    q: int
    total: int

    def __post_init__(self):
        object.__setattr__(self, "kind", normalize_kind(self.kind))

    @classmethod
    def from_fraction(cls, kind: str, q_fraction: float, total: int) -> "DecaySpec":
        """Materialize ``q = ceil(q_fraction * total)``."""
        return cls(kind, int(math.ceil(q_fraction * total - 1e-9)), int(total))

    @property
    def q_fraction(self) -> float:
        return self.q / self.total

    def __call__(self, n: int) -> float:
        return lambda_at(self, n)


def validate(spec: DecaySpec) -> str:
    """Return ``"ok"`` or ``"warning"``; raise ScheduleError for unusable specs."""
    if spec.total < 1:
        raise ScheduleError(f"total iterations must be >= 1, got {spec.total}")
    if spec.q < 1 or spec.q > spec.total:
        raise ScheduleError(f"decay endpoint q={spec.q} must lie in [1, {spec.total}]")
    lo, hi = RECOMMENDED_FRACTION
    if not lo <= spec.q / spec.total <= hi:
        logger.warning("decay endpoint q/N=%.3f outside recommended range [%.1f, %.1f]",
                       spec.q / spec.total, lo, hi)
        return "warning"
    return "ok"


def decay_fraction(kind: str, n: int, q: int) -> float:
    x = n / q
    if kind == "linear":
        return x
    if kind == "sine":
        return math.sin(0.5 * math.pi * x)
    if kind == "one_minus_cosine":
        return 1.0 - math.cos(0.5 * math.pi * x)
    raise ValueError(f"unknown decay kind {kind!r}")


def lambda_at(spec: DecaySpec, n: int) -> float:
    if n < 0:
        raise ScheduleError(f"iteration index must be non-negative, got {n}")
    if n >= spec.q:
        return 0.0
    if n == 0:
        return 1.0
    return min(1.0, max(0.0, 1.0 - decay_fraction(spec.kind, n, spec.q)))


def curve(spec: DecaySpec, stride: int = 1) -> list[tuple[int, float]]:
    """Sample ``(n, lambda)`` at ``0, stride, 2*stride, ...`` through ``N``."""
    if stride < 1:
        raise ScheduleError("stride must be >= 1")
    pts = [(n, lambda_at(spec, n)) for n in range(0, spec.total + 1, stride)]
    if pts[-1][0] != spec.total:
        pts.append((spec.total, lambda_at(spec, spec.total)))
    return pts
