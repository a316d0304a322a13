"""Dense double-precision tensors with reverse-mode differentiation.

Every operation that touches a tensor with ``requires_grad`` records a node:
the output keeps references to its parents and a closure that maps the
upstream gradient to per-parent contributions. ``backward`` replays those
closures in reverse creation order, so accumulation order is fixed and runs
are bit-reproducible.
"""

from __future__ import annotations

import itertools
import math
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import erf

_counter = itertools.count()

# Exact GELU: x * Phi(x); derivative Phi(x) + x * phi(x).
_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class NonFiniteError(FloatingPointError):
    """Raised when an operation produces NaN or Inf."""


def _check_finite(arr: np.ndarray, what: str) -> None:
    if not np.isfinite(arr).all():
        raise NonFiniteError(f"non-finite values produced by {what}")


class Tensor:
    """A float64 array with an optional gradient slot."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_id", "_op")

    def __init__(self, data, requires_grad: bool = False, _parents: tuple = (), _op: str = ""):
        arr = np.array(data, dtype=np.float64)  # always a private copy
        _check_finite(arr, _op or "tensor construction")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = _parents
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self._id = next(_counter)
        self._op = _op

    # -- construction -----------------------------------------------------

    @classmethod
    def _result(cls, data: np.ndarray, parents: tuple["Tensor", ...], op: str, backward) -> "Tensor":
        """Wrap an op result; only record the node when a parent needs grad."""
        out = cls.__new__(cls)
        arr = np.asarray(data, dtype=np.float64)
        _check_finite(arr, op)
        out.data = arr
        out.grad = None
        out._id = next(_counter)
        out._op = op
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward
        else:
            out.requires_grad = False
            out._parents = ()
            out._backward = None
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.item())

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={list(self.shape)}{flag})"

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, other)

    __rmul__ = __mul__

    def __neg__(self) -> "Tensor":
        return scale(self, -1.0)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __getitem__(self, index) -> "Tensor":
        return take(self, index)

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def sum(self, axis=None) -> "Tensor":
        return tsum(self, axis)

    def mean(self, axis=None) -> "Tensor":
        return tmean(self, axis)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def relu(self) -> "Tensor":
        return relu(self)

    def gelu(self) -> "Tensor":
        return gelu(self)

    # -- reverse mode ------------------------------------------------------

    def backward(self) -> None:
        backward(self)


def tensor_new(shape: Sequence[int], values: Iterable[float], requires_grad: bool = False) -> Tensor:
    """Build a tensor from an explicit shape and a flat row-major value list."""
    shape = tuple(int(s) for s in shape)
    if any(s < 1 for s in shape):
        raise ValueError(f"shape extents must be positive, got {list(shape)}")
    vals = np.asarray(list(values), dtype=np.float64)
    if vals.size != math.prod(shape):
        raise ValueError(f"length mismatch: shape {list(shape)} needs {math.prod(shape)} values, got {vals.size}")
    if not np.isfinite(vals).all():
        raise ValueError("tensor values must be finite")
    return Tensor(vals.reshape(shape), requires_grad=requires_grad)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------------------
# graph traversal


def _ancestors(root: Tensor) -> list[Tensor]:
    seen: set[int] = set()
    nodes: list[Tensor] = []
    stack = [root]
    while stack:
        t = stack.pop()
        if t._id in seen:
            continue
        seen.add(t._id)
        nodes.append(t)
        stack.extend(t._parents)
    nodes.sort(key=lambda t: t._id, reverse=True)
    return nodes


def backward(root: Tensor) -> None:
    """Populate ``grad`` on every differentiable ancestor of a scalar root.

    Gradients accumulate into existing ``grad`` slots of leaves. The graph is
    released afterwards, so a second call on the same root is a no-op.
    """
    if root.data.size != 1:
        raise ValueError(f"backward needs a scalar root, got shape {list(root.shape)}")
    if not root.requires_grad:
        return
    order = _ancestors(root)
    upstream: dict[int, np.ndarray] = {root._id: np.ones_like(root.data)}
    for node in order:
        g = upstream.pop(node._id, None)
        if g is None:
            continue
        if node._backward is None:
            # leaf
            if node.requires_grad:
                node.grad = g.copy() if node.grad is None else node.grad + g
                _check_finite(node.grad, "backward")
            continue
        contribs = node._backward(g)
        for parent, pg in zip(node._parents, contribs):
            if pg is None or not parent.requires_grad:
                continue
            prev = upstream.get(parent._id)
            upstream[parent._id] = pg if prev is None else prev + pg
        # one graph per forward pass
        node._backward = None
        node._parents = ()
        node.requires_grad = False


# ---------------------------------------------------------------------------
# elementwise


def _trailing_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    # Only equal shapes or a bias-like right operand matching trailing axes.
    if a.shape == b.shape:
        return
    if b.ndim <= a.ndim and a.shape[a.ndim - b.ndim:] == b.shape:
        return
    raise ValueError(f"{op}: shape mismatch {list(a.shape)} vs {list(b.shape)}")


def _reduce_to(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    lead = g.ndim - len(shape)
    return g.reshape((-1,) + shape).sum(axis=0) if lead > 0 else g


def add(a: Tensor, b: Tensor) -> Tensor:
    _trailing_broadcast(a, b, "add")
    sb = b.shape
    return Tensor._result(a.data + b.data, (a, b), "add", lambda g: (g, _reduce_to(g, sb)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _trailing_broadcast(a, b, "sub")
    sb = b.shape
    return Tensor._result(a.data - b.data, (a, b), "sub", lambda g: (g, -_reduce_to(g, sb)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"mul: shape mismatch {list(a.shape)} vs {list(b.shape)}")
    ad, bd = a.data, b.data
    return Tensor._result(ad * bd, (a, b), "mul", lambda g: (g * bd, g * ad))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    if not math.isfinite(c):
        raise ValueError("scale constant must be finite")
    return Tensor._result(a.data * c, (a,), "scale", lambda g: (g * c,))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return Tensor._result(np.where(mask, a.data, 0.0), (a,), "relu", lambda g: (g * mask,))


def gelu(a: Tensor) -> Tensor:
    """Exact GELU, ``x * Phi(x)`` with Phi the standard normal CDF."""
    x = a.data
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return Tensor._result(x * cdf, (a,), "gelu", lambda g: (g * (cdf + x * pdf),))


def elementwise(kind: str, *operands, constant: float | None = None) -> Tensor:
    """Dispatch by name; ``constant`` is the factor for ``scale``."""
    binary = {"add": add, "sub": sub, "mul": mul}
    unary = {"relu": relu, "gelu": gelu}
    if kind in binary:
        if len(operands) != 2:
            raise ValueError(f"{kind} takes two operands")
        return binary[kind](*operands)
    if kind in unary:
        if len(operands) != 1:
            raise ValueError(f"{kind} takes one operand")
        return unary[kind](operands[0])
    if kind == "scale":
        if len(operands) != 1 or constant is None:
            raise ValueError("scale takes one operand and a constant")
        return scale(operands[0], constant)
    raise ValueError(f"unknown elementwise kind {kind!r}")


# ---------------------------------------------------------------------------
# shape ops and reductions


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes.

    ``a`` may carry leading batch axes; ``b`` is either a plain matrix shared
    across the batch or has the same leading axes as ``a``.
    """
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul operands need at least 2 dimensions")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul: inner dimensions differ {list(a.shape)} @ {list(b.shape)}")
    if b.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
        raise ValueError(f"matmul: batch dimensions differ {list(a.shape)} @ {list(b.shape)}")
    ad, bd = a.data, b.data

    def _bw(g):
        ga = g @ np.swapaxes(bd, -1, -2)
        if bd.ndim == 2:
            gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        else:
            gb = np.swapaxes(ad, -1, -2) @ g
        return ga, gb

    return Tensor._result(ad @ bd, (a, b), "matmul", _bw)


def transpose(a: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    if axes is None:
        axes = tuple(range(a.ndim))[::-1]
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return Tensor._result(np.transpose(a.data, axes), (a,), "transpose", lambda g: (np.transpose(g, inv),))


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    src = a.shape
    return Tensor._result(a.data.reshape(tuple(shape)), (a,), "reshape", lambda g: (g.reshape(src),))


def take(a: Tensor, index) -> Tensor:
    """Numpy-style indexing; repeated indices accumulate in the gradient."""
    if isinstance(index, Tensor):
        index = index.data.astype(np.int64)
    src = a.shape

    def _bw(g):
        full = np.zeros(src)
        np.add.at(full, index, g)
        return (full,)

    return Tensor._result(a.data[index], (a,), "take", _bw)


def tsum(a: Tensor, axis=None) -> Tensor:
    src = a.shape

    def _bw(g):
        if axis is None:
            return (np.broadcast_to(g, src).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), src).copy(),)

    return Tensor._result(a.data.sum(axis=axis), (a,), "sum", _bw)


def tmean(a: Tensor, axis=None) -> Tensor:
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return scale(tsum(a, axis), 1.0 / float(n))


def softmax(a: Tensor) -> Tensor:
    """Softmax over the last axis."""
    z = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=-1, keepdims=True)

    def _bw(g):
        return (s * (g - (g * s).sum(axis=-1, keepdims=True)),)

    return Tensor._result(s, (a,), "softmax", _bw)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each row over the last axis, then apply ``gain`` and ``bias``."""
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ValueError(f"layer_norm: gain/bias must have shape [{d}]")
    if eps <= 0:
        raise ValueError("layer_norm: eps must be positive")
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd
    gd = gain.data

    def _bw(g):
        gx_hat = g * gd
        gx = rstd * (gx_hat - gx_hat.mean(axis=-1, keepdims=True)
                     - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True))
        flat = g.reshape(-1, d)
        return gx, (flat * xhat.reshape(-1, d)).sum(axis=0), flat.sum(axis=0)

    return Tensor._result(xhat * gd + bias.data, (x, gain, bias), "layer_norm", _bw)


# ---------------------------------------------------------------------------
# losses


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of integer ``labels`` under softmax(logits)."""
    if logits.ndim != 2:
        raise ValueError("softmax_cross_entropy expects logits of shape [batch, classes]")
    n, k = logits.shape
    y = np.asarray(labels.data if isinstance(labels, Tensor) else labels).astype(np.int64).reshape(-1)
    if y.shape[0] != n:
        raise ValueError(f"got {y.shape[0]} labels for batch of {n}")
    if n < 1:
        raise ValueError("empty batch")
    if (y < 0).any() or (y >= k).any():
        raise ValueError(f"label out of range [0, {k})")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(n)
    loss = (lse - z[rows, y]).mean()

    def _bw(g):
        p = np.exp(z - lse[:, None])
        p[rows, y] -= 1.0
        return (p * (g / n),)

    return Tensor._result(loss, (logits,), "cross_entropy", _bw)


def mse(a: Tensor, b: Tensor) -> Tensor:
    """Mean of squared differences over every element."""
    if a.shape != b.shape:
        raise ValueError(f"mse: shape mismatch {list(a.shape)} vs {list(b.shape)}")
    diff = a.data - b.data
    n = diff.size
    val = (diff * diff).sum() / n

    def _bw(g):
        d = diff * (2.0 * g / n)
        return d, -d

    return Tensor._result(val, (a, b), "mse", _bw)
