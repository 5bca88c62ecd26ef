import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cosseg.metrics import ConfusionMatrix, confusion, per_class_metrics, report
from cosseg.model import CosLabel

from oracles import naive_confusion


def labels(k):
    return tuple(CosLabel(i, f"c{i}") for i in range(k))


def test_two_by_two_fixture():
    cm = ConfusionMatrix([[4, 1], [2, 3]], labels(2))
    assert cm.one_vs_rest(0) == (4, 1, 2, 3)
    m = per_class_metrics(cm, 0)
    assert m.recall == 0.8
    assert m.precision == pytest.approx(4 / 6)
    assert m.f1 == pytest.approx(0.7273, abs=1e-4)
    assert m.f1 == 2 * (4 / 6) * 0.8 / (4 / 6 + 0.8)
    assert m.fnr == pytest.approx(0.2)
    assert m.accuracy == 0.7
    assert m.support == 5


def test_three_class_fixture():
    # class 1: TP 6, FN 2+1, FP 1+0, TN 20 - 6 - 3 - 1
    cm = ConfusionMatrix([[5, 1, 0], [2, 6, 1], [0, 0, 5]], labels(3))
    m = per_class_metrics(cm, CosLabel(1, "c1"))
    assert (m.precision, m.recall) == (6 / 7, 6 / 9)
    assert m.accuracy == (6 + 10) / 20
    assert m.fnr == 3 / 9
    r = report(cm)
    assert r.overall_accuracy == 16 / 20
    assert r.total == 20


def test_perfect_diagonal():
    r = report(ConfusionMatrix(np.diag([5, 5]), labels(2)))
    assert r.overall_accuracy == 1.0
    assert r.macro_f1 == 1.0
    for c in r.per_class:
        assert (c.precision, c.recall, c.f1, c.fnr) == (1.0, 1.0, 1.0, 0.0)


def test_no_support_class_is_flagged():
    cm = ConfusionMatrix([[3, 1, 0], [0, 0, 0], [1, 0, 2]], labels(3))
    m = per_class_metrics(cm, 1)
    assert m.no_support
    assert (m.recall, m.fnr) == (0.0, 1.0)
    assert m.precision == 0.0  # one false positive, no true positive
    assert m.f1 == 0.0
    assert "n/a" in report(cm).to_table()


def test_never_predicted_class_has_zero_precision():
    m = per_class_metrics(ConfusionMatrix([[0, 4], [0, 4]], labels(2)), 0)
    assert (m.precision, m.f1, m.recall) == (0.0, 0.0, 0.0)
    assert not m.no_support


def test_confusion_basic_cases():
    cls = labels(3)
    assert confusion([0, 1, 2], [0, 1, 2], cls).counts.tolist() == np.eye(3, dtype=int).tolist()
    one = confusion([cls[0]], [cls[1]], cls).counts
    assert one[0, 1] == 1 and one.sum() == 1
    with pytest.raises(ValueError, match="length mismatch"):
        confusion([0, 1], [0], cls)
    with pytest.raises(ValueError, match="unknown"):
        confusion([0, 3], [0, 1], cls)
    with pytest.raises(ValueError, match="unknown"):
        confusion([CosLabel(0, "other")], [0], cls)


@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_confusion_matches_naive_counter(seed, k):
    rng = np.random.default_rng(seed)
    t = rng.integers(0, k, 200).tolist()
    p = rng.integers(0, k, 200).tolist()
    assert confusion(t, p, labels(k)).counts.tolist() == naive_confusion(t, p, k)


_cms = st.integers(2, 6).flatmap(lambda k: arrays(np.int64, (k, k), elements=st.integers(0, 50)))


@given(_cms)
def test_report_properties(counts):
    k = len(counts)
    if counts.sum() == 0:
        with pytest.raises(ValueError, match="empty"):
            report(ConfusionMatrix(counts, labels(k)))
        return
    r = report(ConfusionMatrix(counts, labels(k)))
    assert r.overall_accuracy == np.trace(counts) / counts.sum()
    f1s = [c.f1 for c in r.per_class]
    assert min(f1s) - 1e-12 <= r.macro_f1 <= max(f1s) + 1e-12
    for c in r.per_class:
        if not c.no_support:
            assert c.fnr + c.recall == pytest.approx(1.0, abs=1e-12)
        assert 0.0 <= c.accuracy <= 1.0


@given(_cms, st.randoms())
def test_overall_accuracy_invariant_under_class_permutation(counts, rnd):
    if counts.sum() == 0:
        return
    k = len(counts)
    perm = list(range(k))
    rnd.shuffle(perm)
    a = report(ConfusionMatrix(counts, labels(k))).overall_accuracy
    b = report(ConfusionMatrix(counts[np.ix_(perm, perm)], labels(k))).overall_accuracy
    assert a == b


def test_weighted_f1_uses_support():
    cm = ConfusionMatrix([[9, 1], [0, 0]], labels(2))
    r = report(cm)
    assert r.weighted_f1 == r.per_class[0].f1
    assert r.macro_f1 == r.per_class[0].f1 / 2


def test_serializations():
    r = report(ConfusionMatrix([[4, 1], [2, 3]], labels(2)))
    doc = json.loads(r.to_json())
    assert doc["overall_accuracy"] == 0.7
    assert [c["label"] for c in doc["per_class"]] == ["c0", "c1"]
    table = r.to_table().splitlines()
    assert table[0].split() == ["CoS", "label", "Test", "segments", "Accuracy", "(%)", "FNR"]
    assert table[2].split() == ["c0", "5", "70.00", "0.2000"]
    assert "overall accuracy 70.00%" in r.to_table()
    csv_lines = r.to_csv().splitlines()
    assert csv_lines[0].startswith("label,support,accuracy")
    assert csv_lines[1].startswith("c0,5,0.7,")


def test_matrix_validation():
    with pytest.raises(ValueError):
        ConfusionMatrix([[1, -1], [0, 0]], labels(2))
    with pytest.raises(ValueError):
        ConfusionMatrix([[1, 0, 0]], labels(2))
