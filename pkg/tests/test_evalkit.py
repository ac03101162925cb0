import math
import statistics

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cserkit import evalkit as ek
from cserkit.dataops import DataError, ERROR_TYPES


def test_confusion_endpoints():
    assert ek.confusion([1] * 5, [1] * 5) == ek.Confusion(5, 0, 0, 0)
    g = [1, 0, 1, 1, 0]
    c = ek.confusion([1 - x for x in g], g)
    assert c.tp == 0 and c.tn == 0 and c.n == 5
    with pytest.raises(ValueError):
        ek.confusion([1, 0], [1])
    with pytest.raises(ValueError):
        ek.confusion([2], [1])


def test_confusion_tally_oracle():
    rng = np.random.default_rng(0)
    p = rng.integers(0, 2, 1000).tolist()
    g = rng.integers(0, 2, 1000).tolist()
    tally = {"tp": 0, "fp": 0, "fn": 0, "tn": 0}
    for i in range(1000):
        key = ("t" if p[i] == g[i] else "f") + ("p" if p[i] == 1 else "n")
        tally[key] += 1
    assert ek.confusion(p, g) == ek.Confusion(**tally)


def test_prf_examples():
    r = ek.prf_acc(ek.Confusion(3, 1, 2, 4))
    assert (r.precision, r.recall, r.accuracy) == (75.0, 60.0, 70.0)
    assert abs(r.f1 - 200 / 3) < 1e-9
    perfect = ek.evaluate([1, 0, 1], [1, 0, 1])
    assert (perfect.precision, perfect.recall, perfect.f1, perfect.accuracy) == (100, 100, 100, 100)
    empty_pos = ek.prf_acc(ek.Confusion(0, 0, 0, 4))
    assert empty_pos.precision == 0 and empty_pos.f1 == 0
    assert set(empty_pos.flags) == {"precision_undefined", "recall_undefined"}
    with pytest.raises(ValueError):
        ek.prf_acc(ek.Confusion())


def test_prf_formula_oracle():
    rng = np.random.default_rng(1)
    for _ in range(500):
        tp, fp, fn, tn = (int(x) for x in rng.integers(0, 50, 4))
        if tp + fp + fn + tn == 0:
            continue
        r = ek.prf_acc(ek.Confusion(tp, fp, fn, tn))
        P = tp / (tp + fp) if tp + fp else 0.0
        R = tp / (tp + fn) if tp + fn else 0.0
        F = 2 * P * R / (P + R) if P + R else 0.0
        assert r.precision == pytest.approx(100 * P, abs=1e-9)
        assert r.recall == pytest.approx(100 * R, abs=1e-9)
        assert r.f1 == pytest.approx(100 * F, abs=1e-9)
        assert r.accuracy == pytest.approx(100 * (tp + tn) / (tp + fp + fn + tn), abs=1e-9)


@given(st.integers(0, 30), st.integers(0, 30), st.integers(0, 30), st.integers(0, 30), st.integers(2, 9))
def test_scale_free(tp, fp, fn, tn, k):
    if tp + fp + fn + tn == 0:
        return
    a = ek.prf_acc(ek.Confusion(tp, fp, fn, tn))
    b = ek.prf_acc(ek.Confusion(k * tp, k * fp, k * fn, k * tn))
    for m in ek.METRICS:
        assert getattr(a, m) == pytest.approx(getattr(b, m), abs=1e-9)


@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), min_size=1, max_size=60))
def test_balanced_accuracy_identity(pairs):
    # mirror every item to force an exactly balanced gold set
    preds = [p for p, _ in pairs] + [1 - p for p, _ in pairs]
    golds = [g for _, g in pairs] + [1 - g for _, g in pairs]
    c = ek.confusion(preds, golds)
    r = ek.prf_acc(c)
    specificity = c.tn / (c.tn + c.fp)
    assert abs(r.accuracy - (r.recall + 100 * specificity) / 2) < 1e-9


def test_per_type_recall_examples():
    assert ek.per_type_recall([1, 1, 0], [1, 1, 0], ["Missing", "Illogic", None]) == {
        "Illogic": 100.0, "Missing": 100.0}
    assert ek.per_type_recall([0], [1], ["WordOrder"]) == {"WordOrder": 0.0}
    with pytest.raises(DataError):
        ek.per_type_recall([0], [0], ["WordOrder"])


def test_per_type_grouped_recount_and_micro_identity():
    rng = np.random.default_rng(2)
    types, golds, preds = [], [], []
    for t in ERROR_TYPES:
        for _ in range(10):
            types.append(t)
            golds.append(1)
            preds.append(int(rng.random() < 0.6))
    for _ in range(30):
        types.append(None)
        golds.append(0)
        preds.append(int(rng.random() < 0.3))
    got = ek.per_type_recall(preds, golds, types)
    for t in ERROR_TYPES:
        idx = [i for i in range(len(types)) if types[i] == t]
        assert got[t] == 100 * sum(preds[i] for i in idx) / len(idx)
    rep = ek.evaluate(preds, golds, types)
    weighted = sum(got[t] * 10 for t in ERROR_TYPES) / 70
    assert abs(rep.recall - weighted) < 1e-9
    assert ek.EvalReport.from_dict(rep.to_dict()) == rep


def test_aggregate_examples():
    def rep(x):
        return ek.EvalReport(x, x, x, x, 10)
    agg = ek.aggregate_runs([rep(72.0), rep(74.0)])
    assert agg.mean["f1"] == 73.0
    assert abs(agg.std["f1"] - math.sqrt(2)) < 1e-12
    same = ek.aggregate_runs([rep(50.0)] * 3)
    assert all(v == 0 for v in same.std.values())
    one = ek.aggregate_runs([rep(50.0)])
    assert one.std["f1"] == 0 and one.flags
    assert one.table_row("DP").startswith("DP | 50.0±0.0")
    with pytest.raises(ValueError):
        ek.aggregate_runs([])


def test_aggregate_arithmetic_oracle():
    rng = np.random.default_rng(3)
    reps = [ek.EvalReport(*(float(v) for v in rng.uniform(0, 100, 4)), n=5) for _ in range(3)]
    agg = ek.aggregate_runs(reps)
    for m in ek.METRICS:
        xs = [getattr(r, m) for r in reps]
        assert abs(agg.mean[m] - statistics.fmean(xs)) < 1e-12
        assert abs(agg.std[m] - statistics.stdev(xs)) < 1e-12
