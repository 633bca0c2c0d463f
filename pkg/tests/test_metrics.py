import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lorasense.errors import DomainError
from lorasense.metrics import (
    UNDEFINED, ConfusionMatrix, accuracy, binarize, confusion, evaluate,
    false_detection_rate, is_undefined, macro_average, mean_reports, precision,
    recall, report_from_confusion,
)


def test_worked_example():
    tp, tn, fp, fn = 3, 4, 2, 1
    assert accuracy(tp, tn, fp, fn) == 0.7
    assert precision(tp, fp) == 0.6
    assert recall(tp, fn) == 0.75
    assert false_detection_rate(fp, tn) == pytest.approx(1 / 3, abs=1e-12)


def test_binarize_two_class():
    cm = ConfusionMatrix(np.array([[3, 1], [2, 4]]), (1, 2))
    assert binarize(cm, 1) == (3, 4, 2, 1)
    assert binarize(cm, 2) == (4, 3, 1, 2)


def test_zero_denominators_are_undefined():
    assert accuracy(0, 0, 0, 0) is UNDEFINED
    assert precision(0, 0) is UNDEFINED
    assert recall(0, 0) is UNDEFINED
    assert false_detection_rate(0, 0) is UNDEFINED
    assert is_undefined(UNDEFINED) and not is_undefined(0.0)
    assert repr(UNDEFINED) == "UNDEFINED"


def test_macro_skips_undefined():
    assert macro_average([1.0, UNDEFINED, 0.5]) == 0.75
    assert macro_average([UNDEFINED]) is UNDEFINED


def test_report_csv_and_json():
    rep = evaluate([1, 1, 2, 2], [1, 1, 1, 1], [1, 2])
    lines = rep.to_csv().splitlines()
    assert lines[0] == "class,tp,tn,fp,fn,accuracy,precision,recall,fdr"
    assert lines[2].split(",")[6] == "undefined"  # class 2 is never predicted
    assert lines[-1].startswith("macro,")
    doc = json.loads(rep.to_json())
    assert doc["per_class"][1]["precision"] is None
    assert doc["confusion"] == [[2, 0], [2, 0]]


def test_confusion_rejects_unknown_labels():
    with pytest.raises(DomainError):
        confusion([1, 7], [1, 1], [1, 2])
    with pytest.raises(DomainError):
        confusion([1], [1, 2], [1, 2])


def test_mean_reports():
    a = evaluate([1, 2], [1, 2], [1, 2])
    b = evaluate([1, 2], [2, 1], [1, 2])
    assert mean_reports([a, b])["accuracy"] == 0.5


labels = st.lists(st.tuples(st.integers(1, 5), st.integers(1, 5)), min_size=1, max_size=80)


@given(labels)
def test_binarized_counts_sum_to_total(pairs):
    t, p = zip(*pairs)
    cm = confusion(t, p, range(1, 6))
    for c in cm.classes:
        assert sum(binarize(cm, c)) == len(pairs)


@given(labels)
def test_macro_accuracy_identity(pairs):
    # one-vs-rest accuracy of class c is 1 - (errors touching c) / N; summing
    # over classes counts every error twice
    t, p = zip(*pairs)
    rep = evaluate(t, p, range(1, 6))
    err = sum(a != b for a, b in pairs) / len(pairs)
    assert rep.macro["accuracy"] == pytest.approx(1 - 2 * err / 5, abs=1e-12)


@given(labels, st.permutations(range(5)))
def test_metrics_independent_of_sample_order(pairs, perm):
    t, p = zip(*pairs)
    order = sorted(range(len(pairs)), key=lambda i: perm[i % 5] * 1000 + i)
    a = evaluate(t, p, range(1, 6))
    b = evaluate([t[i] for i in order], [p[i] for i in order], range(1, 6))
    assert a.to_csv() == b.to_csv()


@given(labels)
def test_values_in_unit_interval(pairs):
    t, p = zip(*pairs)
    rep = evaluate(t, p, range(1, 6))
    for row in rep.per_class:
        for v in (row.accuracy, row.precision, row.recall, row.fdr):
            assert v is UNDEFINED or 0.0 <= v <= 1.0


def test_perfect_predictions():
    rep = report_from_confusion(ConfusionMatrix(np.diag([1, 2, 3]), (1, 2, 3)))
    assert rep.macro == {"accuracy": 1.0, "precision": 1.0, "recall": 1.0, "fdr": 0.0}
