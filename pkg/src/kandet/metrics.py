"""Binary classification metrics: confusion matrix, precision/recall/F1,
per-class report, ROC curve and AUC.

The positive class is "generated" (label 1) throughout.  AUC is computed two
independent ways — trapezoidal integration of the ROC staircase and the
tie-corrected rank statistic — and the two must agree to 1e-12; that
equivalence is this module's central self-check and ties collapse to single
diagonal ROC segments to keep it exact.

Zero-denominator metrics report 0.0 with a `degenerate` flag instead of NaN,
so reports stay total and machine-readable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LABEL_NAMES = {0: "real", 1: "generated"}


class MetricInputError(ValueError):
    """Mismatched lengths or non-binary labels."""


class UndefinedAucError(ValueError):
    """ROC/AUC need both classes present."""


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class PrecisionRecallF1:
    precision: float
    recall: float
    f1: float
    degenerate: bool  # set when any denominator was zero


@dataclass(frozen=True)
class ClassStats:
    label: int
    precision: float
    recall: float
    f1: float
    support: int
    degenerate: bool


@dataclass(frozen=True)
class ClassReport:
    per_class: tuple[ClassStats, ClassStats]  # (real, generated)
    accuracy: float
    confusion: ConfusionMatrix


@dataclass(frozen=True)
class RocCurve:
    # (fpr, tpr, threshold) points; thresholds descend from the +inf sentinel
    points: tuple[tuple[float, float, float], ...]
    auc: float


def _as_binary(values, name: str) -> np.ndarray:
    arr = np.asarray(values)
    if arr.ndim != 1:
        arr = arr.ravel()
    if arr.size and not np.isin(arr, (0, 1)).all():
        bad = arr[~np.isin(arr, (0, 1))][0]
        raise MetricInputError(f"{name} must be 0/1, got {bad}")
    return arr.astype(np.int64)


def confusion(labels_true, labels_pred) -> ConfusionMatrix:
    """Tally counts with generated (1) as the positive class."""
    yt = _as_binary(labels_true, "labels_true")
    yp = _as_binary(labels_pred, "labels_pred")
    if yt.shape != yp.shape:
        raise MetricInputError(f"length mismatch: {yt.size} true vs {yp.size} predicted")
    return ConfusionMatrix(
        tp=int(((yt == 1) & (yp == 1)).sum()),
        fp=int(((yt == 0) & (yp == 1)).sum()),
        fn=int(((yt == 1) & (yp == 0)).sum()),
        tn=int(((yt == 0) & (yp == 0)).sum()),
    )


def precision_recall_f1(cm: ConfusionMatrix) -> PrecisionRecallF1:
    """precision = tp/(tp+fp); recall = tp/(tp+fn); f1 = harmonic mean."""
    degenerate = False
    if cm.tp + cm.fp == 0:
        precision, degenerate = 0.0, True
    else:
        precision = cm.tp / (cm.tp + cm.fp)
    if cm.tp + cm.fn == 0:
        recall, degenerate = 0.0, True
    else:
        recall = cm.tp / (cm.tp + cm.fn)
    if precision + recall == 0:
        return PrecisionRecallF1(precision, recall, 0.0, True)
    f1 = 2.0 * precision * recall / (precision + recall)
    return PrecisionRecallF1(precision, recall, f1, degenerate)


def _swap(cm: ConfusionMatrix) -> ConfusionMatrix:
    # metrics for the real class are the label-swapped computation
    return ConfusionMatrix(tp=cm.tn, fp=cm.fn, fn=cm.fp, tn=cm.tp)


def per_class_report(labels_true, labels_pred) -> ClassReport:
    """Precision/recall/F1/support for each class plus overall accuracy."""
    cm = confusion(labels_true, labels_pred)
    gen = precision_recall_f1(cm)
    real = precision_recall_f1(_swap(cm))
    support_gen = cm.tp + cm.fn
    support_real = cm.tn + cm.fp
    total = cm.total
    accuracy = (cm.tp + cm.tn) / total if total else 0.0
    return ClassReport(
        per_class=(
            ClassStats(0, real.precision, real.recall, real.f1, support_real, real.degenerate),
            ClassStats(1, gen.precision, gen.recall, gen.f1, support_gen, gen.degenerate),
        ),
        accuracy=accuracy,
        confusion=cm,
    )


def roc_curve(scores, labels_true) -> RocCurve:
    """ROC staircase over thresholds at every distinct score, descending,
    preceded by a +inf sentinel; tied scores form one step.  AUC by the
    trapezoidal rule.
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    if s.size and not np.isfinite(s).all():
        raise MetricInputError("scores must be finite")
    yt = _as_binary(labels_true, "labels_true")
    if s.shape != yt.shape:
        raise MetricInputError(f"length mismatch: {s.size} scores vs {yt.size} labels")
    pos = int((yt == 1).sum())
    neg = int((yt == 0).sum())
    if pos == 0 or neg == 0:
        raise UndefinedAucError("ROC/AUC undefined without both classes present")

    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    y_sorted = yt[order]
    points = [(0.0, 0.0, math.inf)]
    tp = fp = 0
    i = 0
    n = s.size
    while i < n:
        j = i
        while j < n and s_sorted[j] == s_sorted[i]:
            j += 1
        tp += int(y_sorted[i:j].sum())
        fp += int(j - i - y_sorted[i:j].sum())
        points.append((fp / neg, tp / pos, float(s_sorted[i])))
        i = j
    auc = 0.0
    for (fpr0, tpr0, _), (fpr1, tpr1, _) in zip(points, points[1:]):
        auc += (fpr1 - fpr0) * (tpr1 + tpr0) / 2.0
    return RocCurve(tuple(points), auc)


def auc_rank_oracle(scores, labels_true) -> float:
    """Independent AUC check: fraction of correctly ordered positive/negative
    pairs, counting ties as half.  Not used by roc_curve.
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    yt = _as_binary(labels_true, "labels_true")
    if s.shape != yt.shape:
        raise MetricInputError(f"length mismatch: {s.size} scores vs {yt.size} labels")
    sp = s[yt == 1]
    sn = s[yt == 0]
    if sp.size == 0 or sn.size == 0:
        raise UndefinedAucError("rank AUC undefined without both classes present")
    greater = (sp[:, None] > sn[None, :]).sum()
    ties = (sp[:, None] == sn[None, :]).sum()
    return float((greater + 0.5 * ties) / (sp.size * sn.size))


# ---------------------------------------------------------------------------
# renderers

def report_to_csv(report: ClassReport, path, dataset: str = "-", approach: str = "-") -> None:
    """Two rows per report: dataset,approach,class,precision,recall,f1,support."""
    with open(path, "w", newline="") as fh:
        fh.write("dataset,approach,class,precision,recall,f1,support\n")
        for stats in report.per_class:
            fh.write(
                f"{dataset},{approach},{LABEL_NAMES[stats.label]},"
                f"{stats.precision!r},{stats.recall!r},{stats.f1!r},{stats.support}\n"
            )


def confusion_to_csv(cm: ConfusionMatrix, path) -> None:
    """2x2 grid in the row order [tp fp / fn tn] (documented in the README)."""
    with open(path, "w", newline="") as fh:
        fh.write(f"{cm.tp},{cm.fp}\n{cm.fn},{cm.tn}\n")


def roc_to_csv(curve: RocCurve, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("fpr,tpr,threshold\n")
        for fpr, tpr, thr in curve.points:
            fh.write(f"{fpr!r},{tpr!r},{thr!r}\n")
