"""Linear model scoring, hinge-loss SGD training, and model files.

Both trainers run plain SGD over (lambda/2)|w|^2 plus mean hinge loss.
Features are already bounded, so no standardization is applied and the
train/inference pipelines stay identical.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .domain import DimensionMismatchError, LinearModel

MODEL_FILE_MAGIC = "storystream-linear-model v1"


class ModelFormatError(ValueError):
    """Model file is truncated or malformed."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    learning_rate: float = 0.01
    l2_lambda: float = 1e-4
    seed: int = 0
    shuffle: bool = True
    # "pegasos" decays the step as lr / (1 + lambda * t)
    step_schedule: str = "constant"

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.l2_lambda < 0:
            raise ValueError("l2_lambda must be >= 0")
        if self.step_schedule not in ("constant", "pegasos"):
            raise ValueError(f"unknown step_schedule {self.step_schedule!r}")


@dataclass(frozen=True)
class RankPair:
    """A preference pair: `pos` should outscore `neg`."""

    pos: np.ndarray
    neg: np.ndarray

    def __post_init__(self) -> None:
        pos = np.asarray(self.pos, dtype=np.float64)
        neg = np.asarray(self.neg, dtype=np.float64)
        if pos.shape != neg.shape:
            raise DimensionMismatchError("rank pair arities differ")
        object.__setattr__(self, "pos", pos)
        object.__setattr__(self, "neg", neg)


@dataclass(frozen=True)
class LabeledExample:
    f: np.ndarray
    y: int

    def __post_init__(self) -> None:
        if self.y not in (+1, -1):
            raise ValueError(f"label must be +1 or -1, got {self.y}")
        object.__setattr__(self, "f", np.asarray(self.f, dtype=np.float64))


def score(m: LinearModel, f: np.ndarray) -> float:
    f = np.asarray(f, dtype=np.float64)
    if f.shape != (m.arity,):
        raise DimensionMismatchError(
            f"{m.kind} model has arity {m.arity}, features have shape {f.shape}"
        )
    return float(np.dot(m.weights, f)) + m.bias


def _step(lr: float, lam: float, t: int, schedule: str) -> float:
    if schedule == "pegasos":
        return lr / (1.0 + lam * t)
    return lr


def train_rank(pairs: Sequence[RankPair], cfg: TrainConfig = TrainConfig()) -> LinearModel:
    """Fit a pairwise-hinge ranking model; bias stays 0."""
    if not pairs:
        raise ValueError("train_rank needs at least one pair")
    diffs = np.stack([p.pos - p.neg for p in pairs])
    n, arity = diffs.shape
    w = np.zeros(arity, dtype=np.float64)
    rng = np.random.default_rng(cfg.seed)
    t = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(n) if cfg.shuffle else np.arange(n)
        for i in order:
            t += 1
            eta = _step(cfg.learning_rate, cfg.l2_lambda, t, cfg.step_schedule)
            d = diffs[i]
            violated = np.dot(w, d) < 1.0
            w *= 1.0 - eta * cfg.l2_lambda
            if violated:
                w += eta * d
    return LinearModel(weights=w, bias=0.0, kind="rank")


def train_binary(
    examples: Sequence[LabeledExample],
    cfg: TrainConfig = TrainConfig(),
    kind: str = "accept",
) -> LinearModel:
    """Fit a binary hinge-loss classifier (decision rule: score > 0)."""
    if kind not in ("accept", "merge"):
        raise ValueError(f"train_binary fits accept or merge models, not {kind!r}")
    if not examples:
        raise ValueError("train_binary needs at least one example")
    labels = {e.y for e in examples}
    for missing in (+1, -1):
        if missing not in labels:
            raise ValueError(
                f"training data contains no examples of class {missing:+d}"
            )
    feats = np.stack([e.f for e in examples])
    ys = np.array([e.y for e in examples], dtype=np.float64)
    n, arity = feats.shape
    w = np.zeros(arity, dtype=np.float64)
    b = 0.0
    rng = np.random.default_rng(cfg.seed)
    t = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(n) if cfg.shuffle else np.arange(n)
        for i in order:
            t += 1
            eta = _step(cfg.learning_rate, cfg.l2_lambda, t, cfg.step_schedule)
            f, y = feats[i], ys[i]
            violated = y * (np.dot(w, f) + b) < 1.0
            w *= 1.0 - eta * cfg.l2_lambda
            if violated:
                w += eta * y * f
                b += eta * y
    return LinearModel(weights=w, bias=b, kind=kind)


def constant_model(arity: int, decision: int, kind: str) -> LinearModel:
    """Degenerate classifier that always answers `decision` (+1 or -1).

    Used when a training set collapses to a single class.
    """
    if decision not in (+1, -1):
        raise ValueError("decision must be +1 or -1")
    return LinearModel(weights=np.zeros(arity), bias=float(decision), kind=kind)


def rank_hinge_loss(m: LinearModel, pairs: Sequence[RankPair]) -> float:
    """Mean pairwise hinge: max(0, 1 - w.(pos - neg))."""
    if not pairs:
        return 0.0
    diffs = np.stack([p.pos - p.neg for p in pairs])
    return float(np.mean(np.maximum(0.0, 1.0 - diffs @ m.weights)))


def binary_hinge_loss(m: LinearModel, examples: Sequence[LabeledExample]) -> float:
    """Mean hinge: max(0, 1 - y(w.f + b))."""
    if not examples:
        return 0.0
    feats = np.stack([e.f for e in examples])
    ys = np.array([e.y for e in examples], dtype=np.float64)
    return float(np.mean(np.maximum(0.0, 1.0 - ys * (feats @ m.weights + m.bias))))


def save_model(m: LinearModel, path: str | Path) -> None:
    """Write the diffable text format: kind, arity, bias, then the weights."""
    lines = [
        MODEL_FILE_MAGIC,
        f"kind: {m.kind}",
        f"arity: {m.arity}",
        f"bias: {m.bias:.17g}",
        "weights: " + " ".join(f"{x:.17g}" for x in m.weights),
        "",
    ]
    Path(path).write_text("\n".join(lines), encoding="utf-8")


def load_model(path: str | Path) -> LinearModel:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ModelFormatError(f"cannot read model file {path}: {exc}") from exc
    lines = text.splitlines()
    if len(lines) < 5 or lines[0] != MODEL_FILE_MAGIC:
        raise ModelFormatError(f"{path}: not a {MODEL_FILE_MAGIC!r} file")

    def _field(idx: int, name: str) -> str:
        prefix = name + ": "
        if not lines[idx].startswith(prefix):
            raise ModelFormatError(f"{path}: expected {name!r} on line {idx + 1}")
        return lines[idx][len(prefix):]

    kind = _field(1, "kind")
    try:
        arity = int(_field(2, "arity"))
        bias = float(_field(3, "bias"))
        weights = np.array([float(x) for x in _field(4, "weights").split()])
    except ValueError as exc:
        raise ModelFormatError(f"{path}: {exc}") from exc
    if weights.shape[0] != arity:
        raise ModelFormatError(
            f"{path}: arity {arity} but {weights.shape[0]} weights"
        )
    try:
        return LinearModel(weights=weights, bias=bias, kind=kind)
    except ValueError as exc:
        raise ModelFormatError(f"{path}: {exc}") from exc
