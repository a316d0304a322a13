"""Linear layers: plain, PC-LoRA wrapped, and adapter-only.

Weights are stored ``[d_out, d_in]`` and applied as ``x @ W.T + b`` so inputs
may carry any number of leading batch axes.
"""

from __future__ import annotations

import hashlib
import warnings

import numpy as np

from .autodiff import Tensor, add, matmul, scale, transpose

A_INIT_STD = 0.02


class RankWarning(UserWarning):
    pass


def tensor_digest(tensors) -> str:
    h = hashlib.sha256()
    for t in tensors:
        h.update(str(t.shape).encode())
        h.update(np.ascontiguousarray(t.data).tobytes())
    return h.hexdigest()


def _check_lambda(lam: float) -> float:
    lam = float(lam)
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"decay factor must lie in [0, 1], got {lam}")
    return lam


class Linear:
    def __init__(self, W, b, trainable: bool = True):
        self.W = Tensor(W, requires_grad=trainable)
        self.b = Tensor(b, requires_grad=trainable)
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise ValueError("Linear expects W [d_out, d_in] and b [d_out]")

    @classmethod
    def init(cls, d_in: int, d_out: int, rng: np.random.Generator) -> "Linear":
        bound = 1.0 / np.sqrt(d_in)
        return cls(rng.uniform(-bound, bound, size=(d_out, d_in)), rng.uniform(-bound, bound, size=d_out))

    @property
    def d_in(self) -> int:
        return self.W.shape[1]

    @property
    def d_out(self) -> int:
        return self.W.shape[0]

    def __call__(self, x: Tensor, lam: float = 1.0) -> Tensor:
        return add(matmul(x, transpose(self.W)), self.b)

    def parameters(self) -> list[Tensor]:
        return [t for t in (self.W, self.b) if t.requires_grad]

    def tensors(self) -> dict[str, Tensor]:
        return {"W": self.W, "b": self.b}

    def param_count(self) -> int:
        return self.W.size + self.b.size


class AdapterLinear:
    """``B (A x) + C``: what remains of a PC-LoRA layer once the base is gone."""

    def __init__(self, A, B, C, trainable: bool = True):
        self.A = Tensor(A, requires_grad=trainable)
        self.B = Tensor(B, requires_grad=trainable)
        self.C = Tensor(C, requires_grad=trainable)
        r, _ = self.A.shape
        d_out, rb = self.B.shape
        if rb != r or self.C.shape != (d_out,):
            raise ValueError("adapter shapes must be A [r, d_in], B [d_out, r], C [d_out]")

    @property
    def rank(self) -> int:
        return self.A.shape[0]

    @property
    def d_in(self) -> int:
        return self.A.shape[1]

    @property
    def d_out(self) -> int:
        return self.B.shape[0]

    def adapter_out(self, x: Tensor) -> Tensor:
        # two skinny products; B @ A is never materialized
        return add(matmul(matmul(x, transpose(self.A)), transpose(self.B)), self.C)

    def __call__(self, x: Tensor, lam: float = 0.0) -> Tensor:
        return self.adapter_out(x)

    def parameters(self) -> list[Tensor]:
        return [self.A, self.B, self.C]

    def tensors(self) -> dict[str, Tensor]:
        return {"A": self.A, "B": self.B, "C": self.C}

    def param_count(self) -> int:
        return self.A.size + self.B.size + self.C.size


class PCLoRALinear(AdapterLinear):
    """Frozen ``W, b`` scaled by the decay factor plus a trainable adapter.

    ``F = lam * (W x + b) + B (A x) + C``. The bias decays together with the
    weight so that ``lam = 1`` at initialization is exactly the base layer and
    ``lam = 0`` removes it completely.
    """

    def __init__(self, W, b, A, B, C, index: int = 0):
        super().__init__(A, B, C)
        self.W = Tensor(W, requires_grad=False)
        self.b = Tensor(b, requires_grad=False)
        self.index = index
        if self.W.shape != (self.d_out, self.d_in) or self.b.shape != (self.d_out,):
            raise ValueError("base weight shape does not match adapter shapes")

    @classmethod
    def wrap(cls, W, b, r: int, seed: int, index: int = 0, std: float = A_INIT_STD) -> "PCLoRALinear":
        W = np.asarray(W.data if isinstance(W, Tensor) else W, dtype=np.float64)
        b = np.asarray(b.data if isinstance(b, Tensor) else b, dtype=np.float64)
        if W.ndim != 2:
            raise ValueError("W must be a matrix")
        if r < 1:
            raise ValueError(f"rank must be >= 1, got {r}")
        d_out, d_in = W.shape
        if r > min(d_in, d_out):
            warnings.warn(f"rank {r} exceeds min(d_in, d_out)={min(d_in, d_out)} for layer {index}",
                          RankWarning, stacklevel=2)
        rng = np.random.default_rng(seed)
        A = rng.normal(0.0, std, size=(r, d_in))
        return cls(W, b, A, np.zeros((d_out, r)), np.zeros(d_out), index=index)

    def decayed_base(self, x: Tensor, lam: float) -> Tensor:
        return scale(add(matmul(x, transpose(self.W)), self.b), lam)

    def forward(self, x: Tensor, lam: float) -> tuple[Tensor, Tensor]:
        """Return ``(F, L)``: the layer output and the adapter branch alone."""
        lam = _check_lambda(lam)
        L = self.adapter_out(x)
        if lam == 0.0:
            # the base path contributes nothing, not even rounding noise
            return L, L
        return add(self.decayed_base(x, lam), L), L

    def __call__(self, x: Tensor, lam: float = 1.0) -> Tensor:
        return self.forward(x, lam)[0]

    def frozen_tensors(self) -> dict[str, Tensor]:
        return {"W": self.W, "b": self.b}

    def tensors(self) -> dict[str, Tensor]:
        return {"W": self.W, "b": self.b, **super().tensors()}

    def export_adapter(self) -> AdapterLinear:
        return AdapterLinear(self.A.data, self.B.data, self.C.data)

    def param_count(self) -> int:
        return super().param_count() + self.W.size + self.b.size


def wrap(W, b, r: int, seed: int, index: int = 0) -> PCLoRALinear:
    return PCLoRALinear.wrap(W, b, r, seed, index=index)


def trainable_parameters(layer: AdapterLinear) -> list[Tensor]:
    return [layer.A, layer.B, layer.C]


def export_adapter(layer: PCLoRALinear) -> AdapterLinear:
    return layer.export_adapter()
