"""Accuracy, balanced accuracy, macro-F1 and the per-class report."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

logger = logging.getLogger(__name__)


@dataclass
class ClassRow:
    cls: int
    support: int
    recall: float
    precision: float
    f1: float
    heterophily: float = float("nan")


@dataclass
class MetricsReport:
    acc: float
    bacc: float
    macro_f1: float
    per_class: list[ClassRow] = field(default_factory=list)
    mask_name: str = ""

    def to_json(self) -> dict:
        def clean(x):
            return None if isinstance(x, float) and math.isnan(x) else x

        return {
            "mask": self.mask_name,
            "acc": self.acc,
            "bacc": self.bacc,
            "macro_f1": self.macro_f1,
            "per_class": [{k: clean(v) for k, v in asdict(r).items()} for r in self.per_class],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


def confusion_matrix(predictions, labels, num_classes: int) -> np.ndarray:
    """``cm[true, pred]`` counts."""
    idx = np.asarray(labels, dtype=np.int64) * num_classes + np.asarray(predictions, dtype=np.int64)
    return np.bincount(idx, minlength=num_classes * num_classes).reshape(num_classes, num_classes)


def compute(predictions, labels, mask, num_classes: int | None = None,
            class_h=None, mask_name: str = "") -> MetricsReport:
    """Metrics over the nodes in ``mask``.

    Classes without support in the mask are left out of BAcc and macro-F1.
    """
    mask = np.asarray(mask, dtype=np.int64)
    if mask.size == 0:
        raise ValueError("metrics mask is empty")
    y = np.asarray(labels, dtype=np.int64)[mask]
    yhat = np.asarray(predictions, dtype=np.int64)[mask]
    if num_classes is None:
        num_classes = int(max(y.max(), yhat.max())) + 1
    if np.any((y < 0) | (y >= num_classes)) or np.any((yhat < 0) | (yhat >= num_classes)):
        raise ValueError(f"labels and predictions must lie in 0..{num_classes - 1}")
    cm = confusion_matrix(yhat, y, num_classes)
    tp = np.diag(cm).astype(np.float64)
    support = cm.sum(axis=1)
    predicted = cm.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        recall = np.where(support > 0, tp / support, np.nan)
        precision = np.where(predicted > 0, tp / predicted, 0.0)
        denom = precision + np.nan_to_num(recall)
        f1 = np.where(denom > 0, 2 * precision * np.nan_to_num(recall) / denom, 0.0)
    present = support > 0
    if not np.all(present):
        logger.warning("classes %s have no support in the mask; excluded from BAcc/F1",
                       np.flatnonzero(~present).tolist())
    h = np.full(num_classes, np.nan) if class_h is None else np.asarray(class_h, dtype=np.float64)
    rows = [
        ClassRow(c, int(support[c]), float(recall[c]), float(precision[c]), float(f1[c]), float(h[c]))
        for c in range(num_classes)
    ]
    return MetricsReport(
        acc=float(tp.sum() / len(mask)),
        bacc=float(recall[present].mean()),
        macro_f1=float(f1[present].mean()),
        per_class=rows,
        mask_name=mask_name,
    )


def class_report(report: MetricsReport) -> list[ClassRow]:
    """Per-class rows by descending support, ties broken by class id."""
    return sorted(report.per_class, key=lambda r: (-r.support, r.cls))


REPORT_FIELDS = ("class", "support", "recall", "heterophily")


def class_report_csv(report: MetricsReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_FIELDS)
    for r in class_report(report):
        writer.writerow([r.cls, r.support, repr(r.recall), repr(r.heterophily)])
    return buf.getvalue()


def parse_class_report_csv(text: str) -> list[tuple[int, int, float, float]]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if tuple(header) != REPORT_FIELDS:
        raise ValueError(f"unexpected header {header}")
    return [(int(c), int(s), float(r), float(h)) for c, s, r, h in reader]
