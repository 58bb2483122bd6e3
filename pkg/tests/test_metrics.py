import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ragcn.metrics import UndefinedMetricError, accuracy, confusion, evaluate, macro_f1, per_class_f1, predict, roc_auc


def brute_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    wins = sum(1.0 if p > q else 0.5 if p == q else 0.0 for p, q in itertools.product(pos, neg))
    return wins / (len(pos) * len(neg))


def brute_macro_f1(pred, true, n_classes):
    total = 0.0
    for c in range(n_classes):
        tp = fp = fn = 0
        for p, t in zip(pred, true):
            tp += p == c and t == c
            fp += p == c and t != c
            fn += p != c and t == c
        total += 0.0 if 2 * tp + fp + fn == 0 else 2 * tp / (2 * tp + fp + fn)
    return total / n_classes


class TestConfusion:
    def test_all_major_on_95_5(self):
        true = np.array([0] * 95 + [1] * 5)
        c = confusion(np.zeros(100, dtype=int), true, n_classes=2)
        assert (c.tp[0], c.fp[0], c.fn[1], c.tp[1]) == (95, 5, 5, 0)
        assert accuracy(c) == 0.95
        assert macro_f1(c) == pytest.approx(0.4872, abs=5e-5)
        assert macro_f1(c) == pytest.approx((2 * 95 / 195) / 2, abs=1e-15)

    def test_perfect(self):
        y = np.array([0, 1, 2, 2, 1])
        c = confusion(y, y)
        assert not c.fp.any() and not c.fn.any()
        assert accuracy(c) == 1.0 and macro_f1(c) == 1.0

    def test_mask_and_errors(self):
        c = confusion([0, 1, 1], [0, 0, 1], mask=[True, False, True])
        assert c.tp.tolist() == [1, 1]
        with pytest.raises(ValueError):
            confusion([0, 1], [0, 1], mask=[False, False])
        with pytest.raises(ValueError):
            confusion([0, 1], [0])

    def test_undefined_class_f1_is_zero(self):
        c = confusion([0, 0], [0, 0], n_classes=3)
        f1, undefined = per_class_f1(c)
        assert f1.tolist() == [1.0, 0.0, 0.0] and undefined == [1, 2]

    def test_argmax_ties_go_low(self):
        assert predict([[0.5, 0.5], [0.2, 0.8], [1 / 3, 1 / 3]]).tolist() == [0, 1, 0]

    @settings(max_examples=200)
    @given(st.lists(st.tuples(st.integers(0, 2), st.integers(0, 2)), min_size=1, max_size=40))
    def test_recount_oracle(self, pairs):
        pred, true = map(np.array, zip(*pairs))
        c = confusion(pred, true, n_classes=3)
        assert c.tp.sum() == sum(p == t for p, t in pairs)
        assert np.array_equal(c.tp + c.fn, np.bincount(true, minlength=3))
        assert accuracy(c) == sum(p == t for p, t in pairs) / len(pairs)
        assert abs(macro_f1(c) - brute_macro_f1(pred, true, 3)) <= 1e-12
        # Relabeling classes leaves macro F1 unchanged.
        perm = np.array([2, 0, 1])
        assert macro_f1(confusion(perm[pred], perm[true], n_classes=3)) == pytest.approx(macro_f1(c), abs=1e-12)


class TestRocAuc:
    def test_worked_example(self):
        assert roc_auc([0.9, 0.4, 0.8, 0.3], [1, 1, 0, 0]) == 0.75

    def test_extremes(self):
        assert roc_auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
        assert roc_auc([0.4] * 6, [0, 1, 0, 1, 1, 0]) == 0.5

    def test_single_class(self):
        with pytest.raises(UndefinedMetricError):
            roc_auc([0.2, 0.3], [1, 1])

    @settings(max_examples=200)
    @given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 1)), min_size=2, max_size=40))
    def test_pair_enumeration_and_monotone_invariance(self, pairs):
        scores = np.array([p[0] for p in pairs], dtype=float) / 6
        labels = np.array([p[1] for p in pairs])
        if labels.min() == labels.max():
            return
        auc = roc_auc(scores, labels)
        assert abs(auc - brute_auc(scores, labels)) <= 1e-12
        assert roc_auc(np.exp(3 * scores) - 7, labels) == auc


def test_evaluate_report():
    q = np.array([[0.9, 0.1], [0.2, 0.8], [0.6, 0.4], [0.3, 0.7]])
    rep = evaluate(q, [0, 1, 1, 0], [True, True, True, True])
    assert rep.accuracy == 0.5
    assert rep.roc_auc == 0.75
    d = rep.to_dict()
    assert list(d) == ["accuracy", "macro_f1", "roc_auc", "per_class_f1"]
    json.dumps(d)


def test_multiclass_report_has_no_auc():
    q = np.eye(3)[[0, 1, 2, 1]]
    rep = evaluate(q, [0, 1, 2, 2], np.ones(4, bool))
    assert rep.roc_auc is None
    assert rep.macro_f1 == pytest.approx(brute_macro_f1([0, 1, 2, 1], [0, 1, 2, 2], 3))
