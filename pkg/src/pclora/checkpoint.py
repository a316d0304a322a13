"""Binary checkpoint format.

Layout, all integers little-endian::

    b"PCLR"                      magic
    u32                          format version
    u32 + bytes                  metadata, UTF-8 JSON
    u32                          tensor count
    per tensor:
        u16 + bytes              name, UTF-8
        u8                       ndim
        u64 * ndim               shape
        f64 * prod(shape)        values, row-major

Linear slots are stored as ``layer.<i>.{W,b}`` (frozen/base) and
``layer.<i>.{A,B,C}`` (adapters); other tensors keep their model names.
"""

from __future__ import annotations

import json
import math
import re
import struct

import numpy as np

from .autodiff import Tensor
from .fileio import atomic_write
from .layers import AdapterLinear, Linear, PCLoRALinear
from .models import Model, empty_model

MAGIC = b"PCLR"
VERSION = 1

_LAYER_RE = re.compile(r"^layer\.(\d+)\.(W|b|A|B|C)$")


class CheckpointError(ValueError):
    pass


def encode(model: Model, metadata: dict | None = None) -> bytes:
    meta = dict(metadata or {})
    meta["model"] = model.spec_dict()
    meta["stage"] = model.stage
    meta["num_layers"] = len(model.linears)
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<I", VERSION), struct.pack("<I", len(meta_bytes)), meta_bytes]
    tensors = model.named_tensors()
    parts.append(struct.pack("<I", len(tensors)))
    for name, t in tensors.items():
        nb = name.encode("utf-8")
        arr = np.ascontiguousarray(t.data, dtype="<f8")
        parts += [struct.pack("<H", len(nb)), nb, struct.pack("<B", arr.ndim),
                  struct.pack(f"<{arr.ndim}Q", *arr.shape), arr.tobytes()]
    return b"".join(parts)


def save_checkpoint(model: Model, path: str, metadata: dict | None = None) -> None:
    atomic_write(path, encode(model, metadata))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError(f"truncated {what}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode(buf: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    rd = _Reader(buf)
    if len(buf) < 4 or rd.take(4, "header") != MAGIC:
        raise CheckpointError("not a PCLR checkpoint (bad magic)")
    (version,) = rd.unpack("<I", "header")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (this build reads {VERSION})")
    (mlen,) = rd.unpack("<I", "metadata")
    try:
        meta = json.loads(rd.take(mlen, "metadata").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt metadata: {exc}") from None
    (count,) = rd.unpack("<I", "tensor table")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = rd.unpack("<H", "tensor table")
        name = rd.take(nlen, "tensor table").decode("utf-8")
        (ndim,) = rd.unpack("<B", "tensor table")
        shape = rd.unpack(f"<{ndim}Q", "tensor table")
        raw = rd.take(8 * math.prod(shape), "tensor table")
        if name in tensors:
            raise CheckpointError(f"duplicate tensor name {name!r}")
        tensors[name] = np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)
    if rd.pos != len(buf):
        raise CheckpointError("trailing bytes after tensor table")
    return meta, tensors


def build_from(meta: dict, tensors: dict[str, np.ndarray]) -> Model:
    model = empty_model(meta["model"])
    stage = meta["stage"]
    slots: dict[int, dict[str, np.ndarray]] = {}
    for name, arr in tensors.items():
        m = _LAYER_RE.match(name)
        if m:
            slots.setdefault(int(m.group(1)), {})[m.group(2)] = arr
        else:
            model.extras[name] = Tensor(arr)
    n = meta.get("num_layers", len(slots))
    if sorted(slots) != list(range(n)):
        raise CheckpointError("layer tensors are not numbered 0..n-1")
    try:
        for i in range(n):
            s = slots[i]
            if stage == "plain":
                model.linears.append(Linear(s["W"], s["b"], trainable=False))
            elif stage == "pclora":
                model.linears.append(PCLoRALinear(s["W"], s["b"], s["A"], s["B"], s["C"], index=i))
            elif stage == "adapter":
                model.linears.append(AdapterLinear(s["A"], s["B"], s["C"]))
            else:
                raise CheckpointError(f"unknown model stage {stage!r}")
    except KeyError as exc:
        raise CheckpointError(f"missing tensor layer.{i}.{exc.args[0]}") from None
    return model.freeze()


def load_checkpoint(path: str) -> tuple[Model, dict]:
    """Return ``(model, metadata)``; every tensor comes back frozen."""
    with open(path, "rb") as fh:
        meta, tensors = decode(fh.read())
    return build_from(meta, tensors), meta


def dump_json(model: Model, metadata: dict | None = None) -> str:
    """Human-readable dump. Values go through decimal text, so it is not a lossless format."""
    doc = {"metadata": {**(metadata or {}), "model": model.spec_dict(), "stage": model.stage},
           "tensors": {k: {"shape": list(t.shape), "values": [float(f"{v:.12g}") for v in t.data.ravel()]}
                       for k, t in model.named_tensors().items()}}
    return json.dumps(doc, indent=1)
