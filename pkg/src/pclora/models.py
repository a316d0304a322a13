"""Desk-scale teacher networks and the teacher-to-student wrapping routine.

A model owns an ordered list of linear slots (``model.linears``) plus a
dictionary of non-linear tensors (embeddings, norm gains). Each slot is a
plain :class:`Linear` in a teacher, a :class:`PCLoRALinear` in a student and
an :class:`AdapterLinear` once exported. ``forward`` returns the logits and
the per-slot outputs, which are the distillation taps.
"""

from __future__ import annotations

import copy
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .autodiff import Tensor, add, gelu, layer_norm, matmul, relu, reshape, scale, softmax, take, transpose
from .layers import AdapterLinear, Linear, PCLoRALinear, tensor_digest

ACTIVATIONS = {"relu": relu, "gelu": gelu}


@dataclass
class MLPSpec:
    widths: list[int] = field(default_factory=lambda: [2, 64, 64, 2])
    activation: str = "relu"
    seed: int = 0

    def validate(self) -> None:
        if len(self.widths) < 2 or any(int(w) < 1 for w in self.widths):
            raise ValueError(f"MLP widths must be >= 2 positive entries, got {self.widths}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass
class TinyTransformerSpec:
    depth: int = 2
    d_model: int = 32
    heads: int = 4
    mlp_ratio: int = 4
    seq_len: int = 8
    vocab: int = 16
    n_classes: int = 3
    seed: int = 0

    def validate(self) -> None:
        vals = (self.depth, self.d_model, self.heads, self.mlp_ratio, self.seq_len, self.vocab, self.n_classes)
        if any(int(v) < 1 for v in vals):
            raise ValueError("all transformer dimensions must be positive")
        if self.d_model % self.heads:
            raise ValueError(f"d_model={self.d_model} is not divisible by heads={self.heads}")


class Model:
    kind = "model"

    def __init__(self, spec):
        self.spec = spec
        self.linears: list = []
        self.extras: dict[str, Tensor] = {}

    # -- introspection ----------------------------------------------------

    @property
    def stage(self) -> str:
        """``plain`` (teacher), ``pclora`` (student) or ``adapter`` (exported)."""
        kinds = {type(l) for l in self.linears}
        if kinds == {PCLoRALinear}:
            return "pclora"
        if kinds == {AdapterLinear}:
            return "adapter"
        if kinds == {Linear}:
            return "plain"
        raise ValueError(f"mixed layer types {kinds}")

    @property
    def num_taps(self) -> int:
        return len(self.linears)

    def linear_names(self) -> list[str]:
        raise NotImplementedError

    def named_tensors(self) -> dict[str, Tensor]:
        out = {}
        for i, layer in enumerate(self.linears):
            for k, t in layer.tensors().items():
                out[f"layer.{i}.{k}"] = t
        out.update(self.extras)
        return out

    def parameters(self) -> list[Tensor]:
        """Every tensor that currently requires grad."""
        return [t for t in self.named_tensors().values() if t.requires_grad]

    def adapter_parameters(self) -> list[Tensor]:
        return [t for l in self.linears if isinstance(l, AdapterLinear) for t in (l.A, l.B, l.C)]

    def param_count(self) -> int:
        return sum(t.size for t in self.named_tensors().values())

    def digest(self, names=None) -> str:
        tensors = self.named_tensors()
        keys = sorted(tensors) if names is None else [k for k in sorted(tensors) if k in names]
        return tensor_digest(tensors[k] for k in keys)

    def frozen_digest(self) -> str:
        """Hash of every tensor that is not an adapter matrix."""
        names = [k for k in self.named_tensors() if k.rsplit(".", 1)[-1] not in ("A", "B", "C")]
        return self.digest(names)

    def freeze(self) -> "Model":
        for t in self.named_tensors().values():
            t.requires_grad = False
            t.grad = None
        return self

    def unfreeze(self) -> "Model":
        for t in self.named_tensors().values():
            t.requires_grad = True
        return self

    def clone(self) -> "Model":
        return copy.deepcopy(self)

    def spec_dict(self) -> dict:
        return {"kind": self.kind, **asdict(self.spec)}

    # -- forward ------------------------------------------------------------

    def _slot(self, i: int, x: Tensor, lam: float, feats: list) -> Tensor:
        y = self.linears[i](x, lam)
        feats.append(y)
        return y

    def forward(self, x, lam: float = 1.0) -> tuple[Tensor, list[Tensor]]:
        raise NotImplementedError

    def __call__(self, x, lam: float = 1.0) -> Tensor:
        return self.forward(x, lam)[0]

    def predict(self, X, lam: float = 1.0, batch: int = 512) -> np.ndarray:
        out = []
        for s in range(0, len(X), batch):
            out.append(self.forward(self._input(X[s:s + batch]), lam)[0].data.argmax(axis=-1))
        return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)

    def _input(self, X):
        return Tensor(X)

    def random_inputs(self, rng: np.random.Generator, n: int):
        raise NotImplementedError


class MLP(Model):
    kind = "mlp"

    def __init__(self, spec: MLPSpec, init: bool = True):
        spec.validate()
        super().__init__(spec)
        if init:
            rng = np.random.default_rng(spec.seed)
            w = spec.widths
            self.linears = [Linear.init(w[i], w[i + 1], rng) for i in range(len(w) - 1)]

    def linear_names(self) -> list[str]:
        return [f"fc{i}" for i in range(len(self.linears))]

    def forward(self, x, lam: float = 1.0):
        act = ACTIVATIONS[self.spec.activation]
        h = x if isinstance(x, Tensor) else Tensor(x)
        feats: list[Tensor] = []
        last = len(self.linears) - 1
        for i in range(len(self.linears)):
            h = self._slot(i, h, lam, feats)
            if i < last:
                h = act(h)
        return h, feats

    def random_inputs(self, rng, n):
        return rng.normal(0.0, 1.0, size=(n, self.spec.widths[0]))


class TinyTransformer(Model):
    """Pre-norm encoder: token + position embedding, blocks of attention and MLP, mean pool, head.

    Linear slot order per block is qkv, proj, fc1, fc2; the head comes last.
    """

    kind = "transformer"

    def __init__(self, spec: TinyTransformerSpec, init: bool = True):
        spec.validate()
        super().__init__(spec)
        if not init:
            return
        rng = np.random.default_rng(spec.seed)
        d, hidden = spec.d_model, spec.d_model * spec.mlp_ratio
        self.extras["embed.tok"] = Tensor(rng.normal(0.0, 0.5, size=(spec.vocab, d)), requires_grad=True)
        self.extras["embed.pos"] = Tensor(rng.normal(0.0, 0.1, size=(spec.seq_len, d)), requires_grad=True)
        for j in range(2 * spec.depth + 1):
            self.extras[f"norm.{j}.gain"] = Tensor(np.ones(d), requires_grad=True)
            self.extras[f"norm.{j}.bias"] = Tensor(np.zeros(d), requires_grad=True)
        for _ in range(spec.depth):
            self.linears += [Linear.init(d, 3 * d, rng), Linear.init(d, d, rng),
                             Linear.init(d, hidden, rng), Linear.init(hidden, d, rng)]
        self.linears.append(Linear.init(d, spec.n_classes, rng))

    def linear_names(self) -> list[str]:
        names = []
        for blk in range(self.spec.depth):
            names += [f"block{blk}.qkv", f"block{blk}.proj", f"block{blk}.fc1", f"block{blk}.fc2"]
        return names + ["head"]

    def _norm(self, j: int, x: Tensor) -> Tensor:
        return layer_norm(x, self.extras[f"norm.{j}.gain"], self.extras[f"norm.{j}.bias"])

    def _input(self, X):
        return np.asarray(X, dtype=np.int64)

    def forward(self, tokens, lam: float = 1.0):
        s = self.spec
        tokens = np.asarray(tokens.data if isinstance(tokens, Tensor) else tokens).astype(np.int64)
        if tokens.ndim != 2 or tokens.shape[1] != s.seq_len:
            raise ValueError(f"expected token ids of shape [batch, {s.seq_len}], got {list(tokens.shape)}")
        if tokens.min() < 0 or tokens.max() >= s.vocab:
            raise ValueError("token id out of vocabulary")
        n, T = tokens.shape
        d, H = s.d_model, s.heads
        dh = d // H
        feats: list[Tensor] = []
        x = add(take(self.extras["embed.tok"], tokens), self.extras["embed.pos"])
        for blk in range(s.depth):
            base = 4 * blk
            h = self._norm(2 * blk, x)
            qkv = self._slot(base, h, lam, feats)
            qkv = transpose(reshape(qkv, (n, T, 3, H, dh)), (2, 0, 3, 1, 4))
            q, k, v = take(qkv, 0), take(qkv, 1), take(qkv, 2)
            att = softmax(scale(matmul(q, transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(dh)))
            o = reshape(transpose(matmul(att, v), (0, 2, 1, 3)), (n, T, d))
            x = add(x, self._slot(base + 1, o, lam, feats))
            h = self._norm(2 * blk + 1, x)
            h = gelu(self._slot(base + 2, h, lam, feats))
            x = add(x, self._slot(base + 3, h, lam, feats))
        pooled = self._norm(2 * s.depth, x).mean(axis=1)
        logits = self._slot(len(self.linears) - 1, pooled, lam, feats)
        return logits, feats

    def random_inputs(self, rng, n):
        return rng.integers(0, self.spec.vocab, size=(n, self.spec.seq_len))


MODEL_TYPES = {"mlp": (MLP, MLPSpec), "transformer": (TinyTransformer, TinyTransformerSpec)}


def build_model(spec) -> Model:
    if isinstance(spec, MLPSpec):
        return MLP(spec)
    if isinstance(spec, TinyTransformerSpec):
        return TinyTransformer(spec)
    raise TypeError(f"unsupported spec type {type(spec).__name__}")


def empty_model(spec_dict: dict) -> Model:
    """Model shell of the right type with no layers; used when loading checkpoints."""
    d = dict(spec_dict)
    cls, spec_cls = MODEL_TYPES[d.pop("kind")]
    return cls(spec_cls(**d), init=False)


def wrap_model(teacher: Model, r: int, seed: int = 0) -> tuple[Model, list[str]]:
    """Replace every linear slot with a PC-LoRA layer over frozen copies of its weights.

    Returns the student and the tap names; student and teacher taps are
    index-aligned. Non-linear tensors are copied and frozen.
    """
    if r < 1:
        raise ValueError(f"rank must be >= 1, got {r}")
    if teacher.stage != "plain":
        raise ValueError("can only wrap a plain teacher")
    student = empty_model(teacher.spec_dict())
    student.linears = [PCLoRALinear.wrap(l.W.data, l.b.data, r, seed=(seed * 1_000_003 + i), index=i)
                       for i, l in enumerate(teacher.linears)]
    student.extras = {k: Tensor(t.data) for k, t in teacher.extras.items()}
    return student, teacher.linear_names()


def export_adapters(student: Model) -> Model:
    """Adapter-only copy: every slot becomes ``B (A x) + C``; base weights are dropped."""
    if student.stage != "pclora":
        raise ValueError("export needs a PC-LoRA student")
    out = empty_model(student.spec_dict())
    out.linears = [l.export_adapter() for l in student.linears]
    out.extras = {k: Tensor(t.data) for k, t in student.extras.items()}
    return out.freeze()

