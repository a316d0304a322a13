import numpy as np
import pytest

import pclora.trainer as tr
from pclora.schedule import lambda_at
from pclora.trainer import (
    LOG_COLUMNS,
    TrainConfig,
    TrainingError,
    ablation_grid,
    evaluate,
    init_state,
    run,
    train_step,
)
from pclora.models import export_adapters


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(mode="lora")
    with pytest.raises(ValueError):
        TrainConfig(alpha=1.5)
    with pytest.raises(ValueError):
        TrainConfig(iters=0)
    with pytest.warns(UserWarning, match="forcing alpha=1"):
        assert TrainConfig(mode="adapter_only_scratch", alpha=0.2).alpha == 1.0
    assert TrainConfig(mode="task_only", alpha=0.3).alpha == 1.0
    cfg = TrainConfig(rank=3, iters=10)
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg


def test_log_columns():
    assert LOG_COLUMNS == ("n", "lambda", "task_loss", "kd_loss", "total_loss", "lr", "eval_acc")


def test_evaluate_edge_cases(spirals):
    teacher, train, _ = spirals
    with pytest.raises(ValueError):
        evaluate(teacher, train.subset(np.arange(0, dtype=np.int64)), 1.0)


def test_evaluate_perfect_and_chance(spirals):
    teacher, train, _ = spirals
    pred = teacher.predict(train.X, 1.0)
    perfect = train.subset(np.arange(len(train)))
    perfect.y = pred
    assert evaluate(teacher, perfect, 1.0) == 1.0
    rng = np.random.default_rng(0)
    chance = train.subset(np.arange(len(train)))
    chance.y = rng.integers(0, 2, size=len(train))
    assert abs(evaluate(teacher, chance, 1.0) - 0.5) < 4 * np.sqrt(0.25 / len(train))


def test_student_at_start_equals_teacher(spirals):
    teacher, train, held = spirals
    state = init_state(TrainConfig(iters=10), teacher)
    assert evaluate(state.student, held, 1.0) == evaluate(teacher, held, 1.0)


def test_lambda_log_matches_schedule(spirals):
    teacher, train, _ = spirals
    cfg = TrainConfig(iters=50, decay="linear", decay_end=0.6, batch=16)
    res = run(cfg, teacher, train)
    assert [row.lam for row in res.log] == [lambda_at(cfg.decay_spec, n) for n in range(50)]
    assert all(row.lam == 0.0 for row in res.log[30:])
    assert res.metrics["iterations"] == 50


def test_alpha_one_logs_kd_but_ignores_it(spirals):
    teacher, train, _ = spirals
    res = run(TrainConfig(iters=20, alpha=1.0, batch=16), teacher, train)
    assert all(r.total_loss == r.task_loss for r in res.log)
    assert any(r.kd_loss > 0 for r in res.log)


def test_after_endpoint_loss_ignores_teacher_weights(spirals):
    teacher, train, _ = spirals
    cfg = TrainConfig(iters=10, decay_end=0.5, batch=8, alpha=1.0)
    state = init_state(cfg, teacher)
    for _ in range(5):
        train_step(state, train.batch(state.rng, 8))
    assert state.current_lambda() == 0.0
    batch = train.batch(np.random.default_rng(3), 8)
    twin = init_state(cfg, teacher)
    twin.student = state.student.clone()
    twin.optimizer.params = twin.student.adapter_parameters()
    twin.optimizer.state = state.optimizer.state
    twin.n = state.n
    for l in twin.student.linears:
        l.W.data[...] = 1e3
    a = train_step(state, batch)
    b = train_step(twin, batch)
    assert a.task_loss == b.task_loss


def test_run_is_deterministic(spirals):
    teacher, train, held = spirals
    cfg = TrainConfig(iters=40, batch=16, seed=3)
    a, b = run(cfg, teacher, train, held), run(cfg, teacher, train, held)
    assert [r.as_csv_row() for r in a.log] == [r.as_csv_row() for r in b.log]
    assert a.metrics["final_acc"] == b.metrics["final_acc"]
    assert a.student.digest() == b.student.digest()


def test_snapshots_differ_only_in_adapters(spirals):
    teacher, train, _ = spirals
    res = run(TrainConfig(iters=6, batch=16), teacher, train, snapshot_at=range(7))
    snaps = res.metrics["snapshots"]
    for n in range(6):
        a, b = snaps[n].named_tensors(), snaps[n + 1].named_tensors()
        changed = {k for k in a if not np.array_equal(a[k].data, b[k].data)}
        assert changed and all(k.rsplit(".", 1)[-1] in "ABC" for k in changed)
        assert snaps[n].frozen_digest() == snaps[n + 1].frozen_digest()


def test_teacher_mutation_is_detected(spirals, monkeypatch):
    teacher, train, _ = spirals
    victim = teacher.clone()

    original = tr.train_step

    def tamper(state, batch):
        state.teacher.linears[0].b.data[0] += 1.0
        return original(state, batch)

    monkeypatch.setattr(tr, "train_step", tamper)
    with pytest.raises(TrainingError, match="teacher"):
        run(TrainConfig(iters=2, batch=4), victim, train)


def test_divergence_fails_loudly(spirals):
    teacher, train, _ = spirals
    with pytest.raises(TrainingError, match="non-finite"):
        run(TrainConfig(iters=30, lr=1e300, batch=16, decay_end=0.5), teacher, train)


def test_final_model_equivalence(spirals):
    teacher, train, held = spirals
    res = run(TrainConfig(iters=60, batch=32), teacher, train, held)
    exported = export_adapters(res.student)
    for ds in (train, held):
        assert evaluate(res.student, ds, 0.0) == evaluate(exported, ds, 0.0)


def test_full_ft_reaches_teacher(spirals):
    teacher, train, held = spirals
    res = run(TrainConfig(mode="full_ft", iters=300, batch=64, lr=1e-3), teacher, train, held)
    assert all(r.lam == 1.0 for r in res.log)
    assert res.metrics["final_acc"] >= res.metrics["teacher_acc"]


def test_scratch_below_pclora_on_tokens(tokens):
    teacher, train, held = tokens
    base = dict(iters=800, batch=32, rank=4, lr=1e-2, seed=0)
    pc = run(TrainConfig(mode="pclora", **base), teacher, train, held)
    with pytest.warns(UserWarning):
        scratch = run(TrainConfig(mode="adapter_only_scratch", alpha=0.2, **base), teacher, train, held)
    assert all(r.lam == 0.0 for r in scratch.log)
    assert scratch.metrics["final_acc"] < pc.metrics["final_acc"]


def test_eval_every_fills_column(spirals):
    teacher, train, held = spirals
    res = run(TrainConfig(iters=10, batch=8, eval_every=5), teacher, train, held)
    filled = [r.n for r in res.log if r.eval_acc is not None]
    assert filled == [4, 9]


def test_grid_cardinality_and_alpha_one(spirals):
    teacher, train, held = spirals
    base = TrainConfig(iters=40, batch=16)
    grid = ablation_grid(base, [0.2, 1.0], ["sine"], teacher, train, held, model_name="mlp")
    assert len(grid.cells) == 2 and all(c.accuracy is not None for c in grid.cells)
    assert grid.header() == ["model", "decay", "alpha=0.2", "alpha=1"]
    task_only = run(TrainConfig(iters=40, batch=16, mode="task_only"), teacher, train, held)
    assert grid.cell("sine", 1.0).accuracy == task_only.metrics["final_acc"]


def test_grid_marks_failed_cells(spirals):
    teacher, train, _ = spirals
    grid = ablation_grid(TrainConfig(iters=30, lr=1e300, batch=8), [0.5], ["linear", "sine"], teacher, train)
    assert all(c.accuracy is None and c.error for c in grid.cells)
    assert grid.rows()[0][2] == "FAILED"
