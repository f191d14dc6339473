"""Classification metrics: per-class precision/recall/F1, the three F1
averages, confusion matrix, accuracy.

Conventions (pinned by tests against a brute-force oracle):
  - a class with zero predicted or zero true instances gets precision /
    recall / F1 of 0 where the denominator vanishes
  - weighted F1 weights per-class F1 by true support
  - macro F1 is the unweighted mean over the full class vocabulary
  - micro F1 with exclusions drops every instance whose TRUE label is
    excluded, then micro-averages over the remaining classes; a prediction
    into an excluded class counts as a false negative of the true class but
    no false positive (equivalent to deleting the excluded-label instances).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .autodiff import UsageError


def confusion_matrix(labels: Sequence[int], preds: Sequence[int], num_classes: int) -> np.ndarray:
    """Counts with rows = true class, columns = predicted class."""
    if len(labels) != len(preds):
        raise UsageError("labels and predictions differ in length")
    matrix = np.zeros((num_classes, num_classes), dtype=np.int64)
    for t, p in zip(labels, preds):
        matrix[t, p] += 1
    return matrix


def per_class_prf(confusion: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    num_classes = confusion.shape[0]
    precision = np.zeros(num_classes)
    recall = np.zeros(num_classes)
    f1 = np.zeros(num_classes)
    for k in range(num_classes):
        tp = confusion[k, k]
        predicted = confusion[:, k].sum()
        support = confusion[k, :].sum()
        precision[k] = tp / predicted if predicted > 0 else 0.0
        recall[k] = tp / support if support > 0 else 0.0
        if precision[k] + recall[k] > 0:
            f1[k] = 2 * precision[k] * recall[k] / (precision[k] + recall[k])
    return precision, recall, f1


def weighted_f1(labels: Sequence[int], preds: Sequence[int], num_classes: int) -> float:
    _require_nonempty(labels)
    confusion = confusion_matrix(labels, preds, num_classes)
    _, _, f1 = per_class_prf(confusion)
    support = confusion.sum(axis=1)
    return float((f1 * support).sum() / support.sum())


def macro_f1(labels: Sequence[int], preds: Sequence[int], num_classes: int) -> float:
    _require_nonempty(labels)
    _, _, f1 = per_class_prf(confusion_matrix(labels, preds, num_classes))
    return float(f1.mean())


def micro_f1_excluding(labels: Sequence[int], preds: Sequence[int], num_classes: int,
                       excluded: Sequence[int] = ()) -> float:
    _require_nonempty(labels)
    excluded_set = set(excluded)
    kept = [(t, p) for t, p in zip(labels, preds) if t not in excluded_set]
    if not kept:
        raise UsageError("every instance has an excluded true label")
    tp = fp = fn = 0
    for t, p in kept:
        if t == p:
            tp += 1
        else:
            fn += 1
            if p not in excluded_set:
                fp += 1
    return 2 * tp / (2 * tp + fp + fn) if tp + fp + fn > 0 else 0.0


def accuracy(labels: Sequence[int], preds: Sequence[int]) -> float:
    _require_nonempty(labels)
    return sum(t == p for t, p in zip(labels, preds)) / len(labels)


def _require_nonempty(labels: Sequence[int]) -> None:
    if len(labels) == 0:
        raise UsageError("metrics require at least one instance")


@dataclass
class EvalReport:
    class_names: list[str]
    precision: list[float]
    recall: list[float]
    f1: list[float]
    support: list[int]
    weighted_f1: float
    macro_f1: float
    micro_f1: float               # with the manifest's exclusions applied
    micro_f1_excluded: list[str]
    accuracy: float
    confusion: list[list[int]]    # rows = true class

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "weighted_f1": self.weighted_f1,
            "macro_f1": self.macro_f1,
            "micro_f1": self.micro_f1,
            "micro_f1_excluded": self.micro_f1_excluded,
            "per_class": [
                {"name": name, "precision": p, "recall": r, "f1": f, "support": s}
                for name, p, r, f, s in zip(self.class_names, self.precision,
                                            self.recall, self.f1, self.support)
            ],
            "confusion": self.confusion,
        }

    def metric(self, name: str) -> float:
        value = {"accuracy": self.accuracy, "weighted_f1": self.weighted_f1,
                 "macro_f1": self.macro_f1, "micro_f1": self.micro_f1}.get(name)
        if value is None:
            raise UsageError(f"unknown metric {name!r}")
        return value


def build_report(labels: Sequence[int], preds: Sequence[int], class_names: Sequence[str],
                 excluded_names: Sequence[str] = ()) -> EvalReport:
    num_classes = len(class_names)
    confusion = confusion_matrix(labels, preds, num_classes)
    precision, recall, f1 = per_class_prf(confusion)
    excluded_idx = [class_names.index(name) for name in excluded_names]
    return EvalReport(
        class_names=list(class_names),
        precision=precision.tolist(),
        recall=recall.tolist(),
        f1=f1.tolist(),
        support=confusion.sum(axis=1).tolist(),
        weighted_f1=weighted_f1(labels, preds, num_classes),
        macro_f1=macro_f1(labels, preds, num_classes),
        micro_f1=micro_f1_excluding(labels, preds, num_classes, excluded_idx),
        micro_f1_excluded=list(excluded_names),
        accuracy=accuracy(labels, preds),
        confusion=confusion.tolist(),
    )
