"""PC-LoRA training loop, baselines and the ablation grid."""

from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .autodiff import AdamW, NonFiniteError, softmax_cross_entropy
from .data import SyntheticDataset, two_spirals, token_pattern
from .losses import FeaturePair, feat_kd_loss, total_loss
from .models import MLPSpec, Model, TinyTransformerSpec, build_model, export_adapters, wrap_model
from .schedule import DecaySpec, lambda_at, validate

logger = logging.getLogger(__name__)

MODES = ("pclora", "adapter_only_scratch", "full_ft", "task_only")
LOG_COLUMNS = ("n", "lambda", "task_loss", "kd_loss", "total_loss", "lr", "eval_acc")


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    alpha: float = 0.2
    decay: str = "sine"
    decay_end: float = 0.6
    rank: int = 8
    lr: float = 1e-2
    weight_decay: float = 0.0
    betas: tuple[float, float] = (0.9, 0.999)
    batch: int = 64
    iters: int = 2000
    seed: int = 0
    eval_every: int = 0
    mode: str = "pclora"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {', '.join(MODES)}")
        if self.iters < 1:
            raise ValueError("iters must be >= 1")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.mode in ("adapter_only_scratch", "task_only", "full_ft") and self.alpha != 1.0:
            if self.mode == "adapter_only_scratch":
                warnings.warn("adapter_only_scratch trains on the task loss only; forcing alpha=1", stacklevel=3)
            self.alpha = 1.0
        self.betas = tuple(self.betas)

    @property
    def decay_spec(self) -> DecaySpec:
        return DecaySpec.from_fraction(self.decay, self.decay_end, self.iters)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return cls(**known)


@dataclass
class TrainLogRow:
    n: int
    lam: float
    task_loss: float
    kd_loss: float
    total_loss: float
    lr: float
    eval_acc: float | None = None

    def as_csv_row(self) -> list[str]:
        acc = "" if self.eval_acc is None else repr(self.eval_acc)
        return [str(self.n), repr(self.lam), repr(self.task_loss), repr(self.kd_loss),
                repr(self.total_loss), repr(self.lr), acc]


@dataclass
class TrainState:
    config: TrainConfig
    student: Model
    teacher: Model
    optimizer: AdamW
    rng: np.random.Generator
    decay: DecaySpec
    n: int = 0

    def current_lambda(self) -> float:
        mode = self.config.mode
        if mode == "adapter_only_scratch":
            return 0.0
        if mode == "full_ft":
            return 1.0
        return lambda_at(self.decay, self.n)


@dataclass
class RunResult:
    student: Model
    log: list[TrainLogRow]
    metrics: dict = field(default_factory=dict)


def evaluate(model: Model, dataset: SyntheticDataset, lam: float = 0.0) -> float:
    """Fraction of argmax-correct predictions."""
    if len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    pred = model.predict(dataset.X, lam)
    return float((pred == dataset.y).mean())


def init_state(config: TrainConfig, teacher: Model) -> TrainState:
    decay = config.decay_spec
    validate(decay)
    if config.mode == "full_ft":
        student = teacher.clone().unfreeze()
        params = student.parameters()
    else:
        student, _ = wrap_model(teacher, config.rank, seed=config.seed)
        params = student.adapter_parameters()
    opt = AdamW(params, lr=config.lr, betas=config.betas, weight_decay=config.weight_decay,
                total_steps=config.iters)
    return TrainState(config, student, teacher, opt, np.random.default_rng(config.seed), decay)


def train_step(state: TrainState, batch: tuple[np.ndarray, np.ndarray]) -> TrainLogRow:
    """One iteration: schedule lam, student and teacher forward, blended loss, adapter update."""
    X, y = batch
    if len(y) == 0:
        raise ValueError("empty batch")
    lam = state.current_lambda()
    try:
        logits, s_feats = state.student.forward(state.student._input(X), lam)
        _, t_feats = state.teacher.forward(state.teacher._input(X), 1.0)
        task = softmax_cross_entropy(logits, y)
        kd = feat_kd_loss([FeaturePair(s, t, i) for i, (s, t) in enumerate(zip(s_feats, t_feats))])
        total, parts = total_loss(task, kd, state.config.alpha)
        state.optimizer.zero_grad()
        total.backward()
        lr = state.optimizer.step()
    except NonFiniteError as exc:
        raise TrainingError(f"non-finite value at iteration {state.n} (lambda={lam}): {exc}") from exc
    row = TrainLogRow(state.n, lam, parts.task, parts.feat_kd, parts.total, lr)
    state.n += 1
    return row


def run(config: TrainConfig, teacher: Model, train: SyntheticDataset,
        eval_ds: SyntheticDataset | None = None, snapshot_at: Sequence[int] = ()) -> RunResult:
    """Train for ``config.iters`` steps and evaluate the final model.

    PC-LoRA style modes are scored at lam=0, i.e. as the compressed model.
    ``snapshot_at`` collects student copies after the given step counts.
    """
    eval_ds = eval_ds if eval_ds is not None else train
    teacher_digest = teacher.digest()
    state = init_state(config, teacher)
    log: list[TrainLogRow] = []
    snapshots = {}
    wanted = set(snapshot_at)
    if 0 in wanted:
        snapshots[0] = state.student.clone()
    for _ in range(config.iters):
        row = train_step(state, train.batch(state.rng, config.batch))
        if config.eval_every and (state.n % config.eval_every == 0 or state.n == config.iters):
            row.eval_acc = evaluate(state.student, eval_ds, row.lam)
        log.append(row)
        if state.n in wanted:
            snapshots[state.n] = state.student.clone()
    if teacher.digest() != teacher_digest:
        raise TrainingError("teacher parameters changed during training")
    final_lam = 1.0 if config.mode == "full_ft" else 0.0
    metrics = {
        "mode": config.mode,
        "final_lambda": final_lam,
        "final_acc": evaluate(state.student, eval_ds, final_lam),
        "teacher_acc": evaluate(teacher, eval_ds, 1.0),
        "teacher_digest": teacher_digest,
        "iterations": state.n,
        "snapshots": snapshots,
    }
    logger.info("run finished: mode=%s final_acc=%.4f teacher_acc=%.4f",
                config.mode, metrics["final_acc"], metrics["teacher_acc"])
    return RunResult(state.student, log, metrics)


# ---------------------------------------------------------------------------
# teachers


def train_teacher(model: Model, dataset: SyntheticDataset, budget: int = 3000, lr: float = 1e-2,
                  batch: int = 64, seed: int = 0, min_acc: float = 0.90,
                  weight_decay: float = 0.0) -> Model:
    """Fit every parameter on the task loss, then freeze.

    Raises TrainingError when the training accuracy ends below ``min_acc``.
    """
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    model.unfreeze()
    opt = AdamW(model.parameters(), lr=lr, weight_decay=weight_decay, total_steps=budget)
    rng = np.random.default_rng(seed)
    for n in range(budget):
        X, y = dataset.batch(rng, batch)
        loss = softmax_cross_entropy(model(model._input(X)), y)
        opt.zero_grad()
        loss.backward()
        opt.step()
    model.freeze()
    acc = evaluate(model, dataset, 1.0)
    if acc < min_acc:
        raise TrainingError(f"teacher reached only {acc:.3f} accuracy after {budget} iterations; "
                            "increase the budget")
    logger.info("teacher trained: %d iterations, train accuracy %.4f", budget, acc)
    return model


@dataclass(frozen=True)
class BuiltinTask:
    name: str
    spec: object
    dataset: dict
    teacher_budget: int
    teacher_lr: float

    def make_dataset(self) -> tuple[SyntheticDataset, SyntheticDataset]:
        kind = self.dataset["kind"]
        params = {k: v for k, v in self.dataset.items() if k != "kind"}
        ds = two_spirals(**params) if kind == "two_spirals" else token_pattern(**params)
        return ds.split(0.25, seed=params.get("seed", 0))


BUILTIN_TASKS = {
    "spirals": BuiltinTask("spirals", MLPSpec([2, 64, 64, 2], "relu", seed=0),
                           {"kind": "two_spirals", "n": 2000, "noise": 0.03, "seed": 0}, 3000, 1e-2),
    "tokens": BuiltinTask("tokens", TinyTransformerSpec(depth=2, d_model=16, heads=2, mlp_ratio=2, seq_len=8,
                                                        vocab=16, n_classes=2, seed=0),
                          {"kind": "token_pattern", "n": 800, "seq_len": 8, "vocab": 16, "seed": 0},
                          1500, 1e-2),
}


def builtin_teacher(name: str = "spirals") -> tuple[Model, SyntheticDataset, SyntheticDataset]:
    """Train a builtin teacher; returns ``(teacher, train_split, eval_split)``."""
    if name not in BUILTIN_TASKS:
        raise ValueError(f"unknown builtin task {name!r}; choose from {', '.join(BUILTIN_TASKS)}")
    task = BUILTIN_TASKS[name]
    train, held = task.make_dataset()
    model = build_model(task.spec)
    train_teacher(model, train, budget=task.teacher_budget, lr=task.teacher_lr, seed=0)
    return model, train, held


# ---------------------------------------------------------------------------
# ablation grid


@dataclass
class GridCell:
    decay: str
    alpha: float
    accuracy: float | None
    error: str | None = None


@dataclass
class GridResult:
    model_name: str
    alphas: list[float]
    kinds: list[str]
    cells: list[GridCell]

    def cell(self, kind: str, alpha: float) -> GridCell:
        for c in self.cells:
            if c.decay == kind and c.alpha == alpha:
                return c
        raise KeyError((kind, alpha))

    def header(self) -> list[str]:
        return ["model", "decay"] + [f"alpha={a:g}" for a in self.alphas]

    def rows(self) -> list[list[str]]:
        out = []
        for kind in self.kinds:
            row = [self.model_name, kind]
            for a in self.alphas:
                c = self.cell(kind, a)
                row.append("FAILED" if c.accuracy is None else repr(c.accuracy))
            out.append(row)
        return out


def ablation_grid(base: TrainConfig, alphas: Sequence[float], kinds: Sequence[str], teacher: Model,
                  train: SyntheticDataset, eval_ds: SyntheticDataset | None = None,
                  model_name: str = "toy") -> GridResult:
    """Run each (decay kind, alpha) cell with the shared teacher and seed.

    A failing cell is recorded and the grid continues.
    """
    if not alphas or not kinds:
        raise ValueError("grid needs at least one alpha and one decay kind")
    cells = []
    for kind in kinds:
        for a in alphas:
            cfg = replace(base, alpha=float(a), decay=kind, mode="pclora")
            try:
                res = run(cfg, teacher, train, eval_ds)
                cells.append(GridCell(kind, float(a), res.metrics["final_acc"]))
            except (TrainingError, ValueError, FloatingPointError) as exc:
                logger.error("grid cell decay=%s alpha=%g failed: %s", kind, a, exc)
                cells.append(GridCell(kind, float(a), None, str(exc)))
    return GridResult(model_name, [float(a) for a in alphas], list(kinds), cells)

