import json
import struct

import numpy as np
import pytest

from pclora.checkpoint import CheckpointError, build_from, decode, dump_json, encode, load_checkpoint, save_checkpoint
from pclora.models import MLPSpec, TinyTransformerSpec, build_model, export_adapters, wrap_model

SPECS = [MLPSpec([3, 6, 2], seed=1),
         TinyTransformerSpec(depth=1, d_model=8, heads=2, mlp_ratio=2, seq_len=4, vocab=6, n_classes=2, seed=3)]


def trained_student(spec, rng):
    student, _ = wrap_model(build_model(spec).freeze(), r=2, seed=4)
    for l in student.linears:
        l.B.data[...] = rng.normal(size=l.B.shape)
        l.C.data[...] = rng.normal(size=l.C.shape)
    return student


@pytest.mark.parametrize("spec", SPECS)
@pytest.mark.parametrize("stage", ["plain", "pclora", "adapter"])
def test_round_trip_bit_exact(spec, stage, tmp_path, rng):
    if stage == "plain":
        model = build_model(spec).freeze()
    else:
        model = trained_student(spec, rng)
        if stage == "adapter":
            model = export_adapters(model)
    path = tmp_path / "m.pclr"
    save_checkpoint(model, str(path), {"iteration": 7, "seed": 11})
    back, meta = load_checkpoint(str(path))
    assert back.stage == stage and meta["iteration"] == 7 and meta["seed"] == 11
    a, b = model.named_tensors(), back.named_tensors()
    assert list(a) == list(b)
    for k in a:
        assert a[k].data.tobytes() == b[k].data.tobytes() and a[k].shape == b[k].shape
    X = model.random_inputs(rng, 20)
    lam = 0.3 if stage == "pclora" else 1.0
    assert model(model._input(X), lam).data.tobytes() == back(back._input(X), lam).data.tobytes()
    assert not back.parameters()


def test_tensor_names(rng):
    student = trained_student(SPECS[0], rng)
    assert sorted(student.named_tensors()) == sorted(f"layer.{i}.{k}" for i in range(2) for k in "WbABC")
    exported = export_adapters(student)
    names = set(decode(encode(exported))[1])
    assert names == {f"layer.{i}.{k}" for i in range(2) for k in "ABC"}


def test_truncation_is_reported(rng):
    buf = encode(trained_student(SPECS[0], rng))
    for cut in (len(buf) - 1, len(buf) - 200):
        with pytest.raises(CheckpointError, match="truncated tensor table"):
            decode(buf[:cut])
    with pytest.raises(CheckpointError, match="truncated"):
        decode(buf[:10])


def test_bad_magic_and_version(rng):
    buf = encode(trained_student(SPECS[0], rng))
    with pytest.raises(CheckpointError, match="magic"):
        decode(b"XXXX" + buf[4:])
    with pytest.raises(CheckpointError, match="version 9"):
        decode(buf[:4] + struct.pack("<I", 9) + buf[8:])
    with pytest.raises(CheckpointError, match="trailing"):
        decode(buf + b"\0")


def test_header_layout(rng):
    model = build_model(SPECS[0])
    buf = encode(model, {"k": 1})
    assert buf[:4] == b"PCLR"
    assert struct.unpack("<I", buf[4:8])[0] == 1
    (mlen,) = struct.unpack("<I", buf[8:12])
    meta = json.loads(buf[12:12 + mlen])
    assert meta["model"]["kind"] == "mlp" and meta["stage"] == "plain" and meta["k"] == 1


def test_missing_tensor(rng):
    meta, tensors = decode(encode(trained_student(SPECS[0], rng)))
    del tensors["layer.1.C"]
    with pytest.raises(CheckpointError, match="layer.1.C"):
        build_from(meta, tensors)


def test_json_dump_is_readable(rng):
    doc = json.loads(dump_json(export_adapters(trained_student(SPECS[0], rng)), {"seed": 3}))
    assert doc["metadata"]["seed"] == 3
    assert doc["tensors"]["layer.0.A"]["shape"] == [2, 3]
    assert "layer.0.W" not in doc["tensors"]


def test_atomic_write_leaves_no_temp_files(tmp_path, rng):
    path = tmp_path / "x.pclr"
    save_checkpoint(build_model(SPECS[0]), str(path))
    save_checkpoint(build_model(SPECS[0]), str(path))
    assert [p.name for p in tmp_path.iterdir()] == ["x.pclr"]
