"""Command-line entry point: ``pclora {train,eval,analyze,schedule,export,grid}``.

Exit codes: 0 success, 1 usage error, 2 runtime or numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from dataclasses import replace

import numpy as np

from . import accounting, checkpoint, plotting
from .data import load_csv
from .fileio import atomic_write, csv_text, write_csv
from .models import export_adapters
from .schedule import DecaySpec, ScheduleError, curve, normalize_kind, validate
from .trainer import (BUILTIN_TASKS, LOG_COLUMNS, TrainConfig, TrainingError, ablation_grid,
                      builtin_teacher, evaluate, run)

logger = logging.getLogger("pclora")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _decay_kind(text: str) -> str:
    try:
        return normalize_kind(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _echo_config(command: str, cfg: dict) -> None:
    print(f"# {command} config: {json.dumps(cfg, sort_keys=True)}", file=sys.stderr)


# ---------------------------------------------------------------------------
# teacher / data resolution


def _builtin_name(arg: str) -> str | None:
    name = arg.split(":", 1)[1] if arg.startswith("builtin:") else ("spirals" if arg == "builtin" else arg)
    return name if name in BUILTIN_TASKS else None


def _task_data(meta_task: dict, data_csv: str | None, model_kind: str):
    if data_csv:
        ds = load_csv(data_csv, "token_pattern" if model_kind == "transformer" else "two_spirals")
        return ds.split(0.25, seed=0)
    name = (meta_task or {}).get("builtin")
    if name not in BUILTIN_TASKS:
        raise UsageError("checkpoint has no builtin task recorded; pass --data <csv>")
    return BUILTIN_TASKS[name].make_dataset()


def _resolve_teacher(arg: str, data_csv: str | None):
    name = _builtin_name(arg)
    if name is not None:
        teacher, train, held = builtin_teacher(name)
        task = {"builtin": name}
        if data_csv:
            train, held = _task_data(task, data_csv, teacher.kind)
            task = {"csv": data_csv}
        return teacher, train, held, task
    model, meta = checkpoint.load_checkpoint(arg)
    if model.stage != "plain":
        raise UsageError(f"{arg} holds a {model.stage} model, not a teacher")
    task = meta.get("task", {})
    train, held = _task_data(task, data_csv, model.kind)
    return model, train, held, task


def _config_from(args) -> TrainConfig:
    alpha = args.alpha
    if args.mode == "adapter_only_scratch" and alpha != 1.0:
        logger.warning("--mode adapter_only_scratch ignores --alpha %g; using alpha=1", alpha)
        alpha = 1.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return TrainConfig(alpha=alpha, decay=args.decay, decay_end=args.decay_end, rank=args.rank, lr=args.lr,
                           weight_decay=args.weight_decay, batch=args.batch, iters=args.iters, seed=args.seed,
                           eval_every=args.eval_every, mode=args.mode)


# ---------------------------------------------------------------------------
# commands


def cmd_train(args) -> int:
    cfg = _config_from(args)
    _echo_config("train", {**cfg.to_dict(), "teacher": args.teacher, "out": args.out, "log": args.log})
    validate(cfg.decay_spec)
    teacher, train, held, task = _resolve_teacher(args.teacher, args.data)
    if args.save_teacher:
        checkpoint.save_checkpoint(teacher, args.save_teacher, {"task": task, "role": "teacher"})
    result = run(cfg, teacher, train, held)
    m = result.metrics
    meta = {"config": cfg.to_dict(), "task": task, "iteration": m["iterations"], "q": cfg.decay_spec.q,
            "seed": cfg.seed, "mode": cfg.mode, "alpha": cfg.alpha, "decay": cfg.decay_spec.kind,
            "decay_end": cfg.decay_end, "rank": cfg.rank, "teacher_digest": m["teacher_digest"],
            "final_acc": m["final_acc"], "teacher_acc": m["teacher_acc"]}
    checkpoint.save_checkpoint(result.student, args.out, meta)
    if args.log:
        write_csv(args.log, LOG_COLUMNS, [r.as_csv_row() for r in result.log])
    if args.plot:
        plotting.plot_training_log(result.log, args.plot)
    print(f"mode={cfg.mode} final_acc={m['final_acc']:.4f} (lambda={m['final_lambda']:g}) "
          f"teacher_acc={m['teacher_acc']:.4f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    model, meta = checkpoint.load_checkpoint(args.ckpt)
    lam = args.lam
    if lam is None:
        lam = 0.0 if model.stage in ("pclora", "adapter") else 1.0
    _echo_config("eval", {"ckpt": args.ckpt, "lambda": lam, "data": args.data})
    _, held = _task_data(meta.get("task", {}), args.data, model.kind)
    acc = evaluate(model, held, lam)
    print(f"accuracy={acc:.6f} lambda={lam:g} n={len(held)}")
    return EXIT_OK


def _report_table(rep: accounting.CompressionReport) -> str:
    lines = [f"architecture {rep.arch}  rank {rep.rank}",
             f"{'layer':<18}{'kind':<12}{'count':>6}{'wrap':>6}{'params full':>14}{'params pclora':>15}"
             f"{'MACs full':>16}{'MACs pclora':>16}"]
    for l in rep.layers:
        flag = " !" if l.beyond_break_even else ""
        lines.append(f"{l.name:<18}{l.kind:<12}{l.count:>6}{('yes' if l.wrap else 'no'):>6}{l.params_full:>14}"
                     f"{l.params_compressed:>15}{l.macs_full:>16}{l.macs_compressed:>16}{flag}")
    lines += [
        f"parameters: {rep.params_full / 1e6:.2f}M -> {rep.params_compressed / 1e6:.2f}M "
        f"({rep.param_reduction_pct:.2f}% reduction; {rep.param_reduction_excl_embeddings_pct:.2f}% excluding embeddings)",
        f"GFLOPs (1 FLOP = 1 MAC): {rep.macs_full / 1e9:.2f} -> {rep.macs_compressed / 1e9:.2f} "
        f"({rep.macs_reduction_pct:.2f}% reduction)",
    ]
    if rep.flagged_layers:
        lines.append("! rank at or beyond break-even for: " + ", ".join(rep.flagged_layers))
    return "\n".join(lines)


def cmd_analyze(args) -> int:
    try:
        arch = accounting.load_arch(args.arch)
    except OSError as exc:
        raise UsageError(f"cannot read architecture {args.arch!r}: {exc}") from None
    if args.tokens is not None:
        arch = arch.with_tokens(args.tokens)
    if args.attention_macs != "auto":
        arch = replace(arch, attention_macs=args.attention_macs == "on")
    ranks = args.ranks or [args.rank]
    _echo_config("analyze", {"arch": arch.name, "ranks": ranks, "tokens": arch.tokens,
                             "attention_macs": arch.attention_macs})
    reports = accounting.rank_sweep(arch, ranks)
    for rep in reports:
        print(_report_table(rep))
    if args.csv:
        write_csv(args.csv, accounting.SWEEP_COLUMNS, accounting.sweep_rows(reports))
    if args.plot:
        plotting.plot_rank_sweep(reports, args.plot)
    return EXIT_OK


def cmd_schedule(args) -> int:
    if args.q is None and args.decay_end is None:
        raise UsageError("give --q or --decay-end")
    spec = DecaySpec(args.fn, args.q, args.iters) if args.q is not None else \
        DecaySpec.from_fraction(args.fn, args.decay_end, args.iters)
    _echo_config("schedule", {"fn": spec.kind, "q": spec.q, "iters": spec.total, "stride": args.stride})
    validate(spec)
    text = csv_text(["n", "lambda"], [[str(n), repr(lam)] for n, lam in curve(spec, args.stride)])
    if args.out:
        atomic_write(args.out, text)
    else:
        sys.stdout.write(text)
    if args.plot:
        plotting.plot_schedules(spec.q, spec.total, args.plot)
    return EXIT_OK


def cmd_export(args) -> int:
    model, meta = checkpoint.load_checkpoint(args.ckpt)
    _echo_config("export", {"ckpt": args.ckpt, "out": args.out, "force": args.force, "check": args.check})
    if model.stage != "pclora":
        raise UsageError(f"{args.ckpt} holds a {model.stage} model; export needs a PC-LoRA student")
    it, q = meta.get("iteration", 0), meta.get("q")
    if q is not None and it < q and not args.force:
        print(f"error: checkpoint stopped at iteration {it} before the decay endpoint q={q}; "
              "the base weights still contribute, export would change outputs (use --force)", file=sys.stderr)
        return EXIT_RUNTIME
    exported = export_adapters(model)
    rng = np.random.default_rng(args.seed)
    X = model.random_inputs(rng, args.check)
    diff = float(np.abs(model(model._input(X), 0.0).data - exported(exported._input(X)).data).max())
    print(f"verification: max abs output diff {diff:g} over {args.check} random inputs")
    if diff != 0.0:
        print("error: exported model does not reproduce the lambda=0 student", file=sys.stderr)
        return EXIT_RUNTIME
    out_meta = {**meta, "exported_from": args.ckpt}
    out_meta.pop("model", None)
    out_meta.pop("stage", None)
    checkpoint.save_checkpoint(exported, args.out, out_meta)
    if args.dump_json:
        atomic_write(args.dump_json, checkpoint.dump_json(exported, out_meta))
    print(f"adapter-only model: {exported.param_count()} parameters (student held {model.param_count()})")
    return EXIT_OK


def cmd_grid(args) -> int:
    base = _config_from(args)
    kinds = [normalize_kind(k) for k in args.schedulers.split(",") if k.strip()]
    _echo_config("grid", {**base.to_dict(), "alphas": args.alphas, "schedulers": kinds, "teacher": args.teacher})
    teacher, train, held, task = _resolve_teacher(args.teacher, args.data)
    name = task.get("builtin", "custom")
    result = ablation_grid(base, args.alphas, kinds, teacher, train, held, model_name=name)
    write_csv(args.out, result.header(), result.rows())
    if args.plot:
        plotting.plot_grid(result, args.plot)
    print(csv_text(result.header(), result.rows()), end="")
    return EXIT_RUNTIME if any(c.accuracy is None for c in result.cells) else EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_train_flags(p, out_required: bool = True) -> None:
    p.add_argument("--teacher", default="builtin:spirals",
                   help="teacher checkpoint path, or builtin:spirals / builtin:tokens")
    p.add_argument("--data", default=None, help="dataset CSV (x...,label) overriding the teacher's task")
    p.add_argument("--rank", type=int, default=8, help="adapter rank r")
    p.add_argument("--alpha", type=float, default=0.2, help="task-loss weight in the blended objective")
    p.add_argument("--decay", type=_decay_kind, default="sine", help="sine, one-cosine or linear")
    p.add_argument("--decay-end", type=float, default=0.6, help="decay endpoint q as a fraction of --iters")
    p.add_argument("--iters", type=int, default=2000, help="total iterations N")
    p.add_argument("--batch", type=int, default=64, help="batch size")
    p.add_argument("--lr", type=float, default=1e-2, help="AdamW base learning rate (cosine annealed to 0)")
    p.add_argument("--weight-decay", type=float, default=0.0, help="AdamW decoupled weight decay")
    p.add_argument("--seed", type=int, default=0, help="run seed")
    p.add_argument("--mode", choices=("pclora", "adapter_only_scratch", "full_ft", "task_only"), default="pclora",
                   help="training mode")
    p.add_argument("--eval-every", type=int, default=0, help="evaluate every k iterations (0: never)")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = _Parser(prog="pclora", description="Progressive compression of linear layers into low-rank adapters.",
                     formatter_class=fmt)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train a PC-LoRA student", formatter_class=fmt)
    _add_train_flags(p)
    p.add_argument("--out", required=True, help="student checkpoint path")
    p.add_argument("--log", default=None, help="training log CSV path")
    p.add_argument("--plot", default=None, help="training curve figure path (png/pdf/svg)")
    p.add_argument("--save-teacher", default=None, help="also write the teacher checkpoint here")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint", formatter_class=fmt)
    p.add_argument("--ckpt", required=True, help="checkpoint to evaluate")
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="decay factor; unset means 0 for students and adapters, 1 for teachers")
    p.add_argument("--data", default=None, help="dataset CSV; default regenerates the recorded builtin task")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("analyze", help="parameter / FLOP accounting", formatter_class=fmt)
    p.add_argument("--arch", required=True, help=f"preset ({', '.join(accounting.PRESETS)}) or spec file")
    p.add_argument("--rank", type=int, default=32, help="adapter rank r")
    p.add_argument("--ranks", type=_ints, default=None, help="comma-separated rank sweep (overrides --rank)")
    p.add_argument("--tokens", type=int, default=None, help="override the sequence length")
    p.add_argument("--attention-macs", choices=("auto", "on", "off"), default="auto",
                   help="count attention score/value products (auto: preset convention)")
    p.add_argument("--csv", default=None, help="write report rows as CSV")
    p.add_argument("--plot", default=None, help="rank-sweep figure path")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("schedule", help="emit a decay-factor curve as CSV", formatter_class=fmt)
    p.add_argument("--fn", type=_decay_kind, default="sine", help="sine, one-cosine or linear")
    p.add_argument("--q", type=int, default=None, help="decay endpoint in iterations")
    p.add_argument("--decay-end", type=float, default=None, help="decay endpoint as a fraction of --iters")
    p.add_argument("--iters", type=int, required=True, help="total iterations N")
    p.add_argument("--stride", type=int, default=1, help="sample every k-th iteration")
    p.add_argument("--out", default=None, help="CSV path (default: stdout)")
    p.add_argument("--plot", default=None, help="figure comparing all three schedules")
    p.set_defaults(func=cmd_schedule)

    p = sub.add_parser("export", help="strip base weights, keep adapters", formatter_class=fmt)
    p.add_argument("--ckpt", required=True, help="trained PC-LoRA student checkpoint")
    p.add_argument("--out", required=True, help="adapter-only checkpoint path")
    p.add_argument("--force", action="store_true", help="export even if training stopped before q")
    p.add_argument("--check", type=int, default=100, help="random inputs used to verify equivalence")
    p.add_argument("--seed", type=int, default=0, help="seed for the verification inputs")
    p.add_argument("--dump-json", default=None, help="also write a lossy human-readable JSON dump")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("grid", help="alpha x scheduler ablation grid", formatter_class=fmt)
    _add_train_flags(p)
    p.add_argument("--alphas", type=_floats, default=[0.2, 0.4, 0.6, 0.8, 1.0], help="comma-separated alpha values")
    p.add_argument("--schedulers", default="sine,linear,one-cosine", help="comma-separated decay kinds")
    p.add_argument("--out", required=True, help="result matrix CSV path")
    p.add_argument("--plot", default=None, help="accuracy-vs-alpha figure path")
    p.set_defaults(func=cmd_grid)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"pclora {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingError, ScheduleError, checkpoint.CheckpointError, FloatingPointError, OSError, ValueError) as exc:
        print(f"pclora {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
