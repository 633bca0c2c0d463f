"""Confusion matrices and the four per-class evaluation measures
(accuracy, precision, recall, false detection rate)."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError


class _Undefined:
    """Marker for a ratio whose denominator is zero."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "UNDEFINED"

    def __bool__(self):
        return False

    def __reduce__(self):
        return (_Undefined, ())


UNDEFINED = _Undefined()


def is_undefined(v) -> bool:
    return v is UNDEFINED


def _ratio(num: int, den: int):
    if den == 0:
        return UNDEFINED
    return float(Fraction(int(num), int(den)))


def accuracy(tp, tn, fp, fn):
    return _ratio(tp + tn, tp + tn + fp + fn)


def precision(tp, fp):
    return _ratio(tp, tp + fp)


def recall(tp, fn):
    return _ratio(tp, tp + fn)


def false_detection_rate(fp, tn):
    """FP / (FP + TN): the false positive rate, kept under its original name."""
    return _ratio(fp, fp + tn)


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray  # rows = true class, columns = predicted class
    classes: tuple

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def index(self, c) -> int:
        try:
            return self.classes.index(c)
        except ValueError:
            raise DomainError(f"class {c!r} not in {self.classes}") from None

    def __getitem__(self, key):
        t, p = key
        return int(self.counts[self.index(t), self.index(p)])


def confusion(true_labels: Sequence, predicted_labels: Sequence, classes: Sequence) -> ConfusionMatrix:
    classes = tuple(int(c) for c in classes)
    if len(true_labels) != len(predicted_labels):
        raise DomainError("label sequences differ in length")
    pos = {c: i for i, c in enumerate(classes)}
    counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for t, p in zip(true_labels, predicted_labels):
        try:
            counts[pos[int(t)], pos[int(p)]] += 1
        except KeyError as exc:
            raise DomainError(f"label {exc.args[0]} not in {classes}") from None
    return ConfusionMatrix(counts, classes)


def binarize(cm: ConfusionMatrix, c) -> tuple[int, int, int, int]:
    """One-vs-rest ``(tp, tn, fp, fn)`` for class ``c``."""
    i = cm.index(c)
    tp = int(cm.counts[i, i])
    fn = int(cm.counts[i].sum()) - tp
    fp = int(cm.counts[:, i].sum()) - tp
    return tp, cm.total - tp - fn - fp, fp, fn


MEASURES = ("accuracy", "precision", "recall", "fdr")


@dataclass(frozen=True)
class ClassMetrics:
    cls: int
    tp: int
    tn: int
    fp: int
    fn: int
    accuracy: object
    precision: object
    recall: object
    fdr: object


@dataclass(frozen=True)
class EvalReport:
    per_class: tuple
    macro: dict
    n_samples: int
    confusion: Optional[ConfusionMatrix] = None

    def by_class(self, c) -> ClassMetrics:
        for row in self.per_class:
            if row.cls == c:
                return row
        raise DomainError(f"class {c} not in report")

    def to_csv(self) -> str:
        buf = io.StringIO(newline="")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["class", "tp", "tn", "fp", "fn", *MEASURES])
        for r in self.per_class:
            w.writerow([r.cls, r.tp, r.tn, r.fp, r.fn, *(_cell(getattr(r, m)) for m in MEASURES)])
        w.writerow(["macro", "", "", "", "", *(_cell(self.macro[m]) for m in MEASURES)])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "classes": [r.cls for r in self.per_class],
            "per_class": [
                {"class": r.cls, "tp": r.tp, "tn": r.tn, "fp": r.fp, "fn": r.fn,
                 **{m: _json_value(getattr(r, m)) for m in MEASURES}}
                for r in self.per_class
            ],
            "macro": {m: _json_value(v) for m, v in self.macro.items()},
            "confusion": None if self.confusion is None else self.confusion.counts.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _cell(v) -> str:
    return "undefined" if v is UNDEFINED else repr(float(v))


def _json_value(v):
    return None if v is UNDEFINED else float(v)


def macro_average(values):
    """Unweighted mean of the defined values; UNDEFINED if none are defined."""
    vals = [v for v in values if v is not UNDEFINED]
    if not vals:
        return UNDEFINED
    return float(sum(Fraction(v) for v in vals) / len(vals))


def report_from_confusion(cm: ConfusionMatrix) -> EvalReport:
    rows = []
    for c in cm.classes:
        tp, tn, fp, fn = binarize(cm, c)
        rows.append(ClassMetrics(c, tp, tn, fp, fn, accuracy(tp, tn, fp, fn),
                                 precision(tp, fp), recall(tp, fn), false_detection_rate(fp, tn)))
    macro = {m: macro_average([getattr(r, m) for r in rows]) for m in MEASURES}
    return EvalReport(tuple(rows), macro, cm.total, cm)


def evaluate(true_labels, predicted_labels, classes) -> EvalReport:
    return report_from_confusion(confusion(true_labels, predicted_labels, classes))


def mean_reports(reports: Sequence[EvalReport]) -> dict:
    """Mean of each macro measure across reports (e.g. CV folds)."""
    return {m: macro_average([r.macro[m] for r in reports]) for m in MEASURES}
