"""Confusion matrices and the per-class / aggregate classification metrics.

Per-class numbers are one-vs-rest reductions of the confusion matrix:

* accuracy  = (TP + TN) / total
* precision = TP / (TP + FP), 0 when nothing was predicted as the class
* recall    = TP / (TP + FN)
* f1        = 2 * precision * recall / (precision + recall), 0 when both are 0
* fnr       = FN / (TP + FN)

A class without support (TP + FN = 0) reports recall 0, fnr 1 and sets
``no_support``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .model import CosLabel, check_label_set


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """``counts[i, j]``: segments of true class ``i`` predicted as ``j``."""

    counts: np.ndarray
    classes: tuple[CosLabel, ...]

    def __post_init__(self) -> None:
        counts = np.array(self.counts, dtype=np.int64)
        k = len(self.classes)
        if counts.shape != (k, k):
            raise ValueError(f"counts must be {k}x{k}, got {counts.shape}")
        if (counts < 0).any():
            raise ValueError("confusion counts must be non-negative")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "classes", tuple(self.classes))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def one_vs_rest(self, k: int) -> tuple[int, int, int, int]:
        """(TP, FN, FP, TN) for class index ``k``."""
        c = self.counts
        tp = int(c[k, k])
        fn = int(c[k].sum()) - tp
        fp = int(c[:, k].sum()) - tp
        tn = self.total - tp - fn - fp
        return tp, fn, fp, tn

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ConfusionMatrix):
            return NotImplemented
        return self.classes == other.classes and np.array_equal(self.counts, other.counts)

    __hash__ = None  # type: ignore[assignment]


def _as_ids(values, classes: Sequence[CosLabel]) -> np.ndarray:
    ids = {c.id for c in classes}
    out = []
    for i, v in enumerate(values):
        key = v.id if isinstance(v, CosLabel) else int(v)
        if isinstance(v, CosLabel) and v not in classes:
            raise ValueError(f"position {i}: unknown label {v.name!r}")
        if key not in ids:
            raise ValueError(f"position {i}: unknown label id {key}")
        out.append(key)
    return np.array(out, dtype=np.int64)


def confusion(y_true, y_pred, classes: Sequence[CosLabel]) -> ConfusionMatrix:
    """Count (true, predicted) pairs; labels are class ids or CosLabel objects."""
    if len(y_true) != len(y_pred):
        raise ValueError(f"length mismatch: {len(y_true)} true vs {len(y_pred)} predicted")
    classes = check_label_set(classes)
    t = _as_ids(y_true, classes)
    p = _as_ids(y_pred, classes)
    k = len(classes)
    counts = np.bincount(t * k + p, minlength=k * k).reshape(k, k) if len(t) else np.zeros((k, k))
    return ConfusionMatrix(counts, classes)


@dataclass(frozen=True)
class ClassMetrics:
    label: str
    support: int
    accuracy: float
    precision: float
    recall: float
    f1: float
    fnr: float
    no_support: bool = False


def per_class_metrics(cm: ConfusionMatrix, k: int | CosLabel) -> ClassMetrics:
    if isinstance(k, CosLabel):
        k = cm.classes.index(k)
    if not 0 <= k < len(cm.classes):
        raise ValueError(f"class index {k} not in confusion matrix")
    tp, fn, fp, tn = cm.one_vs_rest(k)
    total = tp + fn + fp + tn
    accuracy = (tp + tn) / total if total else 0.0
    precision = tp / (tp + fp) if tp + fp else 0.0
    support = tp + fn
    recall = tp / support if support else 0.0
    fnr = fn / support if support else 1.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return ClassMetrics(cm.classes[k].name, support, accuracy, precision, recall, f1, fnr, support == 0)


@dataclass(frozen=True)
class MetricsReport:
    per_class: tuple[ClassMetrics, ...]
    overall_accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    weighted_f1: float
    total: int

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "overall_accuracy": self.overall_accuracy,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "weighted_f1": self.weighted_f1,
            "per_class": [asdict(c) for c in self.per_class],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_table(self) -> str:
        """Aligned text table: label, test segments, accuracy %, FNR."""
        head = ("CoS label", "Test segments", "Accuracy (%)", "FNR")
        rows = [
            (
                c.label,
                str(c.support),
                f"{100 * c.accuracy:.2f}",
                "n/a" if c.no_support else f"{c.fnr:.4f}",
            )
            for c in self.per_class
        ]
        widths = [max(len(r[i]) for r in [head, *rows]) for i in range(4)]

        def fmt(r):
            return "  ".join(
                r[i].ljust(widths[i]) if i == 0 else r[i].rjust(widths[i]) for i in range(4)
            )

        lines = [fmt(head), "  ".join("-" * w for w in widths)]
        lines += [fmt(r) for r in rows]
        lines.append("")
        lines.append(f"overall accuracy {100 * self.overall_accuracy:.2f}%  "
                     f"macro F1 {self.macro_f1:.4f}  weighted F1 {self.weighted_f1:.4f}  "
                     f"segments {self.total}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        lines = ["label,support,accuracy,precision,recall,f1,fnr,no_support"]
        for c in self.per_class:
            lines.append(
                f"{c.label},{c.support},{c.accuracy!r},{c.precision!r},{c.recall!r},"
                f"{c.f1!r},{c.fnr!r},{int(c.no_support)}"
            )
        return "\n".join(lines) + "\n"


def report(cm: ConfusionMatrix) -> MetricsReport:
    total = cm.total
    if total == 0:
        raise ValueError("empty confusion matrix: no segments were evaluated")
    per_class = tuple(per_class_metrics(cm, k) for k in range(len(cm.classes)))
    supports = np.array([c.support for c in per_class], dtype=np.float64)
    f1 = np.array([c.f1 for c in per_class])
    return MetricsReport(
        per_class=per_class,
        overall_accuracy=float(np.trace(cm.counts)) / total,
        macro_precision=float(np.mean([c.precision for c in per_class])),
        macro_recall=float(np.mean([c.recall for c in per_class])),
        macro_f1=float(f1.mean()),
        weighted_f1=float(np.dot(f1, supports) / supports.sum()),
        total=total,
    )
