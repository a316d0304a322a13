"""Seeded synthetic classification datasets and their CSV form."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .fileio import write_csv


@dataclass
class SyntheticDataset:
    kind: str
    X: np.ndarray
    y: np.ndarray
    params: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.y.shape[0])

    @property
    def n_classes(self) -> int:
        return int(self.params.get("n_classes", int(self.y.max()) + 1))

    def subset(self, idx) -> "SyntheticDataset":
        return SyntheticDataset(self.kind, self.X[idx], self.y[idx], dict(self.params))

    def split(self, eval_fraction: float = 0.25, seed: int = 0) -> tuple["SyntheticDataset", "SyntheticDataset"]:
        perm = np.random.default_rng(seed).permutation(len(self))
        n_eval = int(round(eval_fraction * len(self)))
        return self.subset(np.sort(perm[n_eval:])), self.subset(np.sort(perm[:n_eval]))

    def batch(self, rng: np.random.Generator, size: int) -> tuple[np.ndarray, np.ndarray]:
        idx = rng.integers(0, len(self), size=min(size, len(self)))
        return self.X[idx], self.y[idx]


def two_spirals(n: int = 2000, noise: float = 0.05, seed: int = 0, turns: float = 1.5) -> SyntheticDataset:
    """Two interleaved planar spirals, ``n // 2`` points per class, coordinates in ~[-1, 1]."""
    rng = np.random.default_rng(seed)
    half = n // 2
    t = np.sqrt(rng.uniform(0.0, 1.0, size=half)) * turns * 2.0 * np.pi
    r = t / (turns * 2.0 * np.pi)
    base = np.stack([r * np.cos(t), r * np.sin(t)], axis=1)
    X = np.concatenate([base, -base]) + rng.normal(0.0, noise, size=(2 * half, 2))
    y = np.concatenate([np.zeros(half, dtype=np.int64), np.ones(half, dtype=np.int64)])
    perm = rng.permutation(2 * half)
    return SyntheticDataset("two_spirals", X[perm], y[perm],
                            {"n": n, "noise": noise, "seed": seed, "turns": turns, "n_classes": 2})


def token_pattern(n: int = 1200, seq_len: int = 8, vocab: int = 16, noise: float = 0.0,
                  seed: int = 0) -> SyntheticDataset:
    """Token sequences labelled by the order of two marker tokens.

    Every sequence holds token 0 and token 1 exactly once at distinct random
    positions; the rest is filler from ``2..vocab-1``. The label is 1 when
    token 0 comes first. A bag of tokens carries no information about the
    label, so the task needs positional mixing. ``noise`` is the fraction of
    labels replaced at random.
    """
    if vocab < 3 or seq_len < 2:
        raise ValueError("token_pattern needs vocab >= 3 and seq_len >= 2")
    rng = np.random.default_rng(seed)
    y = np.arange(n, dtype=np.int64) % 2
    rng.shuffle(y)
    X = rng.integers(2, vocab, size=(n, seq_len))
    for row in range(n):
        first, second = np.sort(rng.choice(seq_len, size=2, replace=False))
        X[row, first], X[row, second] = (0, 1) if y[row] else (1, 0)
    if noise > 0:
        flip = rng.uniform(size=n) < noise
        y = np.where(flip, rng.integers(0, 2, size=n), y)
    return SyntheticDataset("token_pattern", X.astype(np.int64), y,
                            {"n": n, "seq_len": seq_len, "vocab": vocab, "n_classes": 2,
                             "noise": noise, "seed": seed})


GENERATORS = {"two_spirals": two_spirals, "token_pattern": token_pattern}


def make_dataset(kind: str, **params) -> SyntheticDataset:
    if kind not in GENERATORS:
        raise ValueError(f"unknown dataset kind {kind!r}")
    return GENERATORS[kind](**params)


def save_csv(ds: SyntheticDataset, path: str) -> None:
    X = ds.X.reshape(len(ds), -1)
    integer = np.issubdtype(ds.X.dtype, np.integer)
    rows = [[str(int(v)) if integer else repr(float(v)) for v in row] + [str(int(label))]
            for row, label in zip(X, ds.y)]
    write_csv(path, [f"x{j}" for j in range(X.shape[1])] + ["label"], rows)


def load_csv(path: str, kind: str = "csv") -> SyntheticDataset:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if not header or header[-1] != "label":
        raise ValueError(f"{path}: last column must be 'label'")
    feats = [[float(v) for v in r[:-1]] for r in body]
    X = np.array(feats, dtype=np.float64).reshape(len(body), len(header) - 1)
    if kind == "token_pattern":
        X = X.astype(np.int64)
    y = np.array([int(r[-1]) for r in body], dtype=np.int64)
    return SyntheticDataset(kind, X, y, {"n_classes": int(y.max()) + 1 if len(y) else 0})
