"""Report figures written next to the CSV outputs.

Uses the object-oriented Figure API with the Agg canvas so nothing touches
global pyplot state or needs a display.
"""

from __future__ import annotations

import os

from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .schedule import KINDS, DecaySpec, curve

_STYLE = {"sine": "-", "linear": "--", "one_minus_cosine": "-."}
_LABEL = {"sine": "Sine", "linear": "Linear", "one_minus_cosine": "1-Cosine"}


def _figure(width: float = 6.0, height: float = 3.8) -> Figure:
    fig = Figure(figsize=(width, height), dpi=110)
    FigureCanvasAgg(fig)
    return fig


def _save(fig: Figure, path: str) -> str:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path)
    return path


def plot_schedules(q: int, total: int, path: str, kinds=KINDS, stride: int | None = None) -> str:
    fig = _figure()
    ax = fig.add_subplot(1, 1, 1)
    stride = stride or max(1, total // 400)
    for kind in kinds:
        pts = curve(DecaySpec(kind, q, total), stride)
        ax.plot([n for n, _ in pts], [lam for _, lam in pts], _STYLE.get(kind, "-"), label=_LABEL.get(kind, kind))
    ax.axvline(q, color="0.6", lw=0.8)
    ax.set_xlabel("iteration")
    ax.set_ylabel("decay factor")
    ax.set_ylim(-0.03, 1.03)
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_rank_sweep(reports, path: str) -> str:
    fig = _figure(7.5, 3.4)
    ranks = [r.rank for r in reports]
    ax1 = fig.add_subplot(1, 2, 1)
    ax1.plot(ranks, [r.params_compressed / 1e6 for r in reports], "o-", label="PC-LoRA")
    ax1.axhline(reports[0].params_full / 1e6, color="0.4", ls="--", label="full")
    ax1.set_xlabel("rank")
    ax1.set_ylabel("parameters (M)")
    ax1.legend(frameon=False)
    ax2 = fig.add_subplot(1, 2, 2)
    ax2.plot(ranks, [r.macs_compressed / 1e9 for r in reports], "s-", label="PC-LoRA")
    ax2.axhline(reports[0].macs_full / 1e9, color="0.4", ls="--", label="full")
    ax2.set_xlabel("rank")
    ax2.set_ylabel("GMACs")
    ax2.legend(frameon=False)
    fig.suptitle(reports[0].arch)
    return _save(fig, path)


def plot_training_log(rows, path: str) -> str:
    fig = _figure(6.5, 4.2)
    ax = fig.add_subplot(1, 1, 1)
    n = [r.n for r in rows]
    ax.semilogy(n, [max(r.task_loss, 1e-12) for r in rows], lw=0.8, label="task")
    ax.semilogy(n, [max(r.kd_loss, 1e-12) for r in rows], lw=0.8, label="feature KD")
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    twin = ax.twinx()
    twin.plot(n, [r.lam for r in rows], color="k", lw=1.0, label="decay factor")
    twin.set_ylim(-0.03, 1.03)
    twin.set_ylabel("decay factor")
    ax.legend(loc="upper right", frameon=False)
    return _save(fig, path)


def plot_grid(result, path: str) -> str:
    fig = _figure()
    ax = fig.add_subplot(1, 1, 1)
    for kind in result.kinds:
        accs = [result.cell(kind, a).accuracy for a in result.alphas]
        pts = [(a, 100 * acc) for a, acc in zip(result.alphas, accs) if acc is not None]
        ax.plot([p[0] for p in pts], [p[1] for p in pts], "o" + _STYLE.get(kind, "-"), label=_LABEL.get(kind, kind))
    ax.set_xlabel("alpha")
    ax.set_ylabel("accuracy (%)")
    ax.set_title(result.model_name)
    ax.legend(frameon=False)
    return _save(fig, path)
