"""Losses, the Adam optimizer, and the mini-batch training loop.

Both classifiers train with binary cross-entropy: the hybrid through its
sigmoid head (loss gradient taken at the probability), the baseline through
softmax negative log-likelihood (loss gradient taken at the logits), which
is numerically the same objective for two classes.

Everything here is deterministic given (seed, config, dataset): shuffles and
dropout masks come from one SeededRng stream per fit() call, so two runs with
identical inputs produce bit-identical parameters.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import layers, models
from .dataset import EmbeddingRecord, SplitSpec, stratified_split, to_arrays
from .metrics import confusion, precision_recall_f1
from .models import (
    BaselineMlp,
    HybridKanMlp,
    Model,
    _baseline_forward_cached,
    _hybrid_forward_cached,
    baseline_backward,
    hybrid_backward,
    parameter_blocks,
    predict_label,
)
from .numerics import SeededRng, ShapeError

BCE_CLAMP = 1e-7  # keeps log() finite; gradient is zero outside the clamp


class LabelError(ValueError):
    """A label outside {0, 1}."""


class TrainingError(ValueError):
    """Unusable training inputs (e.g. a single-class dataset)."""


class DivergenceError(RuntimeError):
    """Loss became non-finite during training."""


# ---------------------------------------------------------------------------
# losses

def _check_labels(y) -> np.ndarray:
    y = np.asarray(y)
    if y.size and not np.isin(y, (0, 1)).all():
        bad = y[~np.isin(y, (0, 1))][0]
        raise LabelError(f"labels must be 0 or 1, got {bad}")
    return y.astype(np.float64)


def bce_loss(p, y) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy and its gradient w.r.t. the probabilities.

    Probabilities are clamped to [BCE_CLAMP, 1 - BCE_CLAMP] before the log;
    the gradient is consistent with the clamp (zero where it saturates).
    """
    p = np.asarray(p, dtype=np.float64)
    yf = _check_labels(y).reshape(p.shape)
    n = p.size
    pc = np.clip(p, BCE_CLAMP, 1.0 - BCE_CLAMP)
    loss = float(-np.mean(yf * np.log(pc) + (1.0 - yf) * np.log(1.0 - pc)))
    inside = (p >= BCE_CLAMP) & (p <= 1.0 - BCE_CLAMP)
    grad = (-yf / pc + (1.0 - yf) / (1.0 - pc)) / n * inside
    return loss, grad


def nll_softmax_loss(probs, y) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood of softmax probabilities.

    Returns the loss and its gradient at the *logits*, (p - onehot)/n, the
    standard fused softmax+NLL form.  Numerically equal to bce_loss on the
    class-1 probability for two classes.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2:
        raise ShapeError(f"probabilities must be [batch x classes], got {probs.shape}")
    yf = _check_labels(y).ravel().astype(np.int64)
    if yf.shape[0] != probs.shape[0]:
        raise ShapeError(f"got {probs.shape[0]} rows but {yf.shape[0]} labels")
    n = probs.shape[0]
    picked = np.clip(probs[np.arange(n), yf], BCE_CLAMP, None)
    loss = float(-np.mean(np.log(picked)))
    grad = probs.copy()
    grad[np.arange(n), yf] -= 1.0
    return loss, grad / n


# ---------------------------------------------------------------------------
# Adam

@dataclass
class AdamState:
    """First/second moment buffers mirroring the parameter blocks."""

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: list[np.ndarray], learning_rate: float = 1e-3) -> "AdamState":
        return cls(
            learning_rate=learning_rate,
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
        )


def adam_step(state: AdamState, params: list[np.ndarray], grads: list[np.ndarray]) -> list[np.ndarray]:
    """One Adam update, in place on the parameter arrays.

    m <- b1*m + (1-b1)*g;  v <- b2*v + (1-b2)*g^2;  bias-corrected m_hat,
    v_hat; p <- p - lr * m_hat / (sqrt(v_hat) + eps).
    """
    if len(params) != len(state.m) or len(params) != len(grads):
        raise ShapeError(f"got {len(params)} params, {len(grads)} grads, {len(state.m)} buffers")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        p -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


# ---------------------------------------------------------------------------
# training loop

@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 64
    epochs: int = 100
    seed: int = 0
    val_fraction: float = 0.1
    patience: int | None = None  # early stopping on val loss; off by default

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size < 2:
            raise ValueError(f"batch_size must be >= 2 (batch norm), got {self.batch_size}")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError(f"val_fraction must be in [0, 1), got {self.val_fraction}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    val_f1: float


@dataclass
class TrainReport:
    epochs: list[EpochStats]
    wall_time: float
    model: Model

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("epoch,train_loss,val_loss,val_f1\n")
            for e in self.epochs:
                fh.write(f"{e.epoch},{e.train_loss!r},{e.val_loss!r},{e.val_f1!r}\n")


def _train_step(model: Model, xb: np.ndarray, yb: np.ndarray, rng: SeededRng) -> tuple[float, list[np.ndarray]]:
    if isinstance(model, HybridKanMlp):
        p, cache = _hybrid_forward_cached(model, xb, layers.TRAIN, rng)
        loss, d_p = bce_loss(p, yb.reshape(-1, 1))
        return loss, hybrid_backward(model, cache, d_p)
    if isinstance(model, BaselineMlp):
        probs, cache = _baseline_forward_cached(model, xb, layers.TRAIN)
        loss, d_logits = nll_softmax_loss(probs, yb)
        return loss, baseline_backward(model, cache, d_logits)
    raise TrainingError(f"unknown model type {type(model).__name__}")


def _validation_stats(model: Model, x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    if x.shape[0] == 0:
        return float("nan"), float("nan")
    if isinstance(model, HybridKanMlp):
        p = models.hybrid_forward(model, x, layers.EVAL)
        loss, _ = bce_loss(p, y.reshape(-1, 1))
        labels = predict_label(p)
    else:
        probs = models.baseline_forward(model, x, layers.EVAL)
        loss, _ = nll_softmax_loss(probs, y)
        labels = predict_label(probs)
    f1 = precision_recall_f1(confusion(y, labels)).f1
    return loss, f1


def fit(model: Model, dataset: list[EmbeddingRecord], config: TrainConfig) -> TrainReport:
    """Mini-batch Adam training; returns the per-epoch report.

    The dataset is split into train/validation with a stratified, seeded
    split.  Batches reshuffle every epoch; a final batch of fewer than two
    rows is dropped (train-mode batch norm needs a variance).
    """
    if not dataset:
        raise TrainingError("dataset is empty")
    labels = {r.label for r in dataset}
    if labels != {0, 1}:
        raise TrainingError(f"training needs both classes present, got labels {sorted(labels)}")

    start = time.monotonic()
    if config.val_fraction > 0:
        spec = SplitSpec(
            train_fraction=1.0 - config.val_fraction,
            val_fraction=config.val_fraction,
            seed=config.seed,
        )
        train_recs, val_recs, _ = stratified_split(dataset, spec)
    else:
        train_recs, val_recs = list(dataset), []
    x_train, y_train = to_arrays(train_recs)
    x_val, y_val = to_arrays(val_recs)

    rng = SeededRng(config.seed)
    params = [arr for _, arr in parameter_blocks(model)]
    adam = AdamState.for_params(params, config.learning_rate)

    history: list[EpochStats] = []
    best_val = float("inf")
    since_best = 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(x_train.shape[0])
        total, seen = 0.0, 0
        for lo in range(0, x_train.shape[0], config.batch_size):
            idx = order[lo : lo + config.batch_size]
            if idx.size < 2:
                continue
            xb, yb = x_train[idx], y_train[idx]
            loss, grads = _train_step(model, xb, yb, rng)
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}, step {lo // config.batch_size}")
            adam_step(adam, params, grads)
            total += loss * idx.size
            seen += idx.size
        train_loss = total / seen if seen else float("nan")
        val_loss, val_f1 = _validation_stats(model, x_val, y_val)
        history.append(EpochStats(epoch, train_loss, val_loss, val_f1))
        if config.patience is not None and val_recs:
            if val_loss < best_val - 1e-12:
                best_val = val_loss
                since_best = 0
            else:
                since_best += 1
                if since_best > config.patience:
                    break
    return TrainReport(history, time.monotonic() - start, model)
