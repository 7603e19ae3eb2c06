"""Confusion matrices and support-weighted precision / recall / F1."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import N_CLASSES


def confusion(preds: Sequence[int], truths: Sequence[int], k: int = N_CLASSES) -> np.ndarray:
    """``k x k`` counts; rows are true classes, columns predicted classes."""
    preds = np.asarray(preds, dtype=np.int64)
    truths = np.asarray(truths, dtype=np.int64)
    if preds.shape != truths.shape:
        raise ValueError(f"length mismatch: {preds.size} predictions vs {truths.size} labels")
    if preds.size == 0:
        raise ValueError("no predictions to evaluate")
    if preds.min() < 0 or truths.min() < 0 or preds.max() >= k or truths.max() >= k:
        raise ValueError(f"labels must lie in [0, {k})")
    cm = np.zeros((k, k), dtype=np.int64)
    np.add.at(cm, (truths, preds), 1)
    return cm


@dataclass(frozen=True)
class ClassScores:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class MetricsReport:
    precision: float
    recall: float
    f1: float
    accuracy: float
    per_class: tuple[ClassScores, ...]
    macro_precision: float
    macro_recall: float
    macro_f1: float
    zero_division: int

    def summary(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1_weighted": self.f1,
            "accuracy": self.accuracy,
        }

    def to_json(self) -> dict:
        out = self.summary()
        out["macro"] = {"precision": self.macro_precision, "recall": self.macro_recall, "f1": self.macro_f1}
        out["per_class"] = [vars(c) for c in self.per_class]
        out["zero_division"] = self.zero_division
        return out


def _ratio(num: float, den: float) -> tuple[float, bool]:
    return (num / den, False) if den > 0 else (0.0, True)


def report(cm: np.ndarray) -> MetricsReport:
    """Per-class P/R/F1 and their support-weighted averages.

    A zero denominator yields 0 for that metric and is counted in ``zero_division``.
    """
    cm = np.asarray(cm, dtype=np.int64)
    total = int(cm.sum())
    if total <= 0:
        raise ValueError("empty confusion matrix")
    tp = np.diag(cm)
    predicted = cm.sum(axis=0)
    support = cm.sum(axis=1)
    per_class = []
    zero_div = 0
    for c in range(cm.shape[0]):
        p, zp = _ratio(tp[c], predicted[c])
        r, zr = _ratio(tp[c], support[c])
        f = 2 * p * r / (p + r) if p + r > 0 else 0.0
        zero_div += zp + zr
        per_class.append(ClassScores(float(p), float(r), float(f), int(support[c])))

    def weighted(attr: str) -> float:
        return float(sum(s.support / total * getattr(s, attr) for s in per_class))

    def macro(attr: str) -> float:
        return float(np.mean([getattr(s, attr) for s in per_class]))

    return MetricsReport(
        precision=weighted("precision"),
        recall=weighted("recall"),
        f1=weighted("f1"),
        accuracy=float(tp.sum() / total),
        per_class=tuple(per_class),
        macro_precision=macro("precision"),
        macro_recall=macro("recall"),
        macro_f1=macro("f1"),
        zero_division=zero_div,
    )


def evaluate(preds: Sequence[int], truths: Sequence[int], k: int = N_CLASSES) -> MetricsReport:
    return report(confusion(preds, truths, k))


def pct(value: float) -> str:
    """Render a [0, 1] metric as a percentage with two decimals."""
    return f"{100 * value:.2f}"
