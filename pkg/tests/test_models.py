import numpy as np
import pytest

from pclora.accounting import arch_from_model, count_params
from pclora.autodiff import Tensor
from pclora.data import load_csv, make_dataset, save_csv, token_pattern, two_spirals
from pclora.layers import PCLoRALinear
from pclora.models import (
    MLP,
    MLPSpec,
    TinyTransformer,
    TinyTransformerSpec,
    build_model,
    export_adapters,
    wrap_model,
)
from pclora.trainer import TrainingError, evaluate, train_teacher

SMALL_TF = TinyTransformerSpec(depth=2, d_model=8, heads=2, mlp_ratio=2, seq_len=5, vocab=7, n_classes=3, seed=4)


def test_mlp_counts():
    m = build_model(MLPSpec([2, 8, 3]))
    assert len(m.linears) == 2
    assert m.param_count() == 2 * 8 + 8 + 8 * 3 + 3 == 51


def test_transformer_linear_slots():
    m = build_model(TinyTransformerSpec(depth=2, d_model=32, heads=4))
    assert len(m.linears) == 9
    assert m.linear_names()[:4] == ["block0.qkv", "block0.proj", "block0.fc1", "block0.fc2"]
    assert m.linear_names()[-1] == "head"


@pytest.mark.parametrize("spec", [MLPSpec([3, 5, 4], seed=9), SMALL_TF])
def test_same_seed_same_outputs(spec, rng):
    a, b = build_model(spec), build_model(spec)
    X = a.random_inputs(rng, 10)
    assert a(a._input(X)).data.tobytes() == b(b._input(X)).data.tobytes()


def test_invalid_specs():
    with pytest.raises(ValueError):
        MLP(MLPSpec([4]))
    with pytest.raises(ValueError):
        MLP(MLPSpec([4, 0, 2]))
    with pytest.raises(ValueError):
        TinyTransformer(TinyTransformerSpec(d_model=10, heads=3))
    with pytest.raises(TypeError):
        build_model({"widths": [2, 2]})


def test_transformer_rejects_bad_tokens():
    m = build_model(SMALL_TF)
    with pytest.raises(ValueError):
        m(np.full((2, 5), 7))
    with pytest.raises(ValueError):
        m(np.zeros((2, 4), dtype=np.int64))


@pytest.mark.parametrize("spec", [MLPSpec([3, 16, 16, 4], seed=1), SMALL_TF])
def test_wrap_is_exact_at_lambda_one(spec, rng):
    teacher = build_model(spec).freeze()
    student, taps = wrap_model(teacher, r=2, seed=5)
    assert len(taps) == len(teacher.linears) == student.num_taps
    assert all(isinstance(l, PCLoRALinear) for l in student.linears)
    X = teacher.random_inputs(rng, 100)
    t_out, t_feats = teacher.forward(teacher._input(X), 1.0)
    s_out, s_feats = student.forward(student._input(X), 1.0)
    assert np.max(np.abs(t_out.data - s_out.data)) == 0.0
    assert [f.shape for f in s_feats] == [f.shape for f in t_feats]


@pytest.mark.parametrize("spec", [MLPSpec([3, 16, 16, 4], seed=1), SMALL_TF])
def test_trainable_count_and_accounting_crosscheck(spec):
    teacher = build_model(spec).freeze()
    r = 2
    student, _ = wrap_model(teacher, r=r)
    expected = sum(r * l.d_in + l.d_out * r + l.d_out for l in teacher.linears)
    assert sum(p.size for p in student.adapter_parameters()) == expected
    arch = arch_from_model(teacher)
    assert count_params(arch, "full")[0] == teacher.param_count()
    frozen_extra = sum(t.size for t in teacher.extras.values())
    assert count_params(arch, "pclora", r)[0] == expected + frozen_extra
    assert count_params(arch_from_model(export_adapters(student)), "pclora", r)[0] == export_adapters(student).param_count()


def test_wrap_requires_plain_teacher():
    teacher = build_model(MLPSpec([2, 4, 2])).freeze()
    student, _ = wrap_model(teacher, 2)
    with pytest.raises(ValueError):
        wrap_model(student, 2)
    with pytest.raises(ValueError):
        wrap_model(teacher, 0)


def test_wrap_does_not_share_teacher_buffers():
    teacher = build_model(SMALL_TF).freeze()
    student, _ = wrap_model(teacher, 2)
    before = teacher.digest()
    student.extras["embed.tok"].data[0, 0] += 1.0
    student.linears[0].W.data[0, 0] += 1.0
    assert teacher.digest() == before


def test_export_drops_base_weights(rng):
    teacher = build_model(SMALL_TF).freeze()
    student, _ = wrap_model(teacher, 2, seed=1)
    for l in student.linears:
        l.B.data[...] = rng.normal(size=l.B.shape)
    exported = export_adapters(student)
    assert exported.stage == "adapter"
    assert not any(k.endswith((".W", ".b")) for k in exported.named_tensors())
    X = teacher.random_inputs(rng, 50)
    assert np.array_equal(exported(X).data, student(X, 0.0).data)


def test_datasets_are_deterministic():
    assert np.array_equal(two_spirals(200, seed=3).X, two_spirals(200, seed=3).X)
    assert not np.array_equal(two_spirals(200, seed=3).X, two_spirals(200, seed=4).X)
    a, b = token_pattern(100, seed=2), token_pattern(100, seed=2)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)


def test_datasets_are_balanced():
    assert np.bincount(two_spirals(300).y).tolist() == [150, 150]
    assert np.bincount(token_pattern(101).y).tolist() == [51, 50]


def test_token_pattern_label_rule():
    ds = token_pattern(200, seq_len=6, vocab=9, seed=5)
    for row, label in zip(ds.X, ds.y):
        assert (row == 0).sum() == 1 and (row == 1).sum() == 1
        assert label == int(np.argmax(row == 0) < np.argmax(row == 1))


def test_make_dataset_unknown():
    with pytest.raises(ValueError):
        make_dataset("mnist")


@pytest.mark.parametrize("ds", [two_spirals(50, seed=1), token_pattern(40, seed=1)])
def test_csv_round_trip(ds, tmp_path):
    path = tmp_path / "d.csv"
    save_csv(ds, str(path))
    back = load_csv(str(path), ds.kind)
    assert np.array_equal(back.X, ds.X) and np.array_equal(back.y, ds.y)
    assert back.X.dtype == ds.X.dtype
    assert path.read_text().splitlines()[0].endswith(",label")


def test_split_partitions():
    ds = two_spirals(100)
    tr, ev = ds.split(0.25, seed=0)
    assert len(tr) == 75 and len(ev) == 25
    rows = {tuple(r) for r in np.concatenate([tr.X, ev.X])}
    assert len(rows) == 100


def test_spirals_teacher_quality(spirals):
    teacher, train, held = spirals
    assert evaluate(teacher, train, 1.0) >= 0.97
    assert evaluate(teacher, held, 1.0) >= 0.95
    assert not teacher.parameters()


def test_tokens_teacher_quality(tokens):
    teacher, train, _ = tokens
    assert evaluate(teacher, train, 1.0) >= 0.95


def test_teacher_budget_too_small():
    ds = two_spirals(400, seed=0)
    with pytest.raises(TrainingError, match="increase the budget"):
        train_teacher(build_model(MLPSpec([2, 8, 2])), ds, budget=5)
