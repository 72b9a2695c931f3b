import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from chasd.metrics import (
    ConfusionMatrix,
    MmeCategory,
    UndefinedMetricError,
    accuracy,
    amber_score,
    confusion,
    f1,
    mme_category_from_pairs,
    mme_score,
    mmhal_average,
    precision,
    recall,
)
from oracles import loop_confusion


def test_confusion_examples():
    assert confusion(["yes"], ["yes"]) == ConfusionMatrix(tp=1)
    assert confusion(["no"] * 5, ["yes"] * 5) == ConfusionMatrix(fn=5)


def test_confusion_matches_loop():
    g = np.random.default_rng(0)
    for _ in range(20):
        preds = list(g.choice(["yes", "no"], 20))
        golds = list(g.choice(["yes", "no"], 20))
        cm = confusion(preds, golds)
        assert (cm.tp, cm.tn, cm.fp, cm.fn) == loop_confusion(preds, golds)


def test_confusion_errors():
    with pytest.raises(ValueError):
        confusion(["yes"], ["yes", "no"])
    with pytest.raises(ValueError):
        confusion(["maybe"], ["yes"])


def test_accuracy_values():
    assert accuracy(ConfusionMatrix(3, 4, 2, 1)) == pytest.approx(0.7, abs=1e-9)
    assert accuracy(ConfusionMatrix(tp=2, tn=5)) == 1.0
    assert accuracy(ConfusionMatrix(fp=2, fn=1)) == 0.0
    with pytest.raises(UndefinedMetricError):
        accuracy(ConfusionMatrix())


def test_f1_values():
    assert f1(ConfusionMatrix(tp=3, fp=2, fn=1)) == pytest.approx(6 / 9, abs=1e-9)
    assert f1(ConfusionMatrix(tp=4, tn=1)) == 1.0
    assert f1(ConfusionMatrix(tn=3, fp=1, fn=2)) == 0.0
    with pytest.raises(UndefinedMetricError):
        f1(ConfusionMatrix(tn=5))


def test_amber():
    assert amber_score(0, 100) == 100
    assert amber_score(100, 0) == 0
    assert amber_score(10, 80) == pytest.approx(85, abs=1e-9)
    with pytest.raises(ValueError):
        amber_score(-1, 50)
    with pytest.raises(ValueError):
        amber_score(10, 100.5)


def test_mme():
    assert mme_score([MmeCategory("existence", 1, 1)]) == 200
    perception = ["existence", "count", "color", "position", "celebrity", "landmark", "artwork", "poster", "movie", "design"]
    assert mme_score([MmeCategory(n, 1.0, 1.0) for n in perception]) == 2000
    assert mme_score([MmeCategory("a", 0.5, 0.25), MmeCategory("b", 0.8, 0.6)]) == pytest.approx(215, abs=1e-9)
    with pytest.raises(ValueError):
        mme_score([])


def test_mme_from_pairs():
    cat = mme_category_from_pairs("count", [(True, True), (True, False), (False, False), (True, True)])
    assert cat.acc == 5 / 8 and cat.acc_plus == 2 / 4
    assert cat.acc_plus <= cat.acc


def test_mmhal():
    assert mmhal_average([6] * 96) == 6.0
    assert mmhal_average([0, 6]) == 3.0
    vals = list(np.random.default_rng(1).uniform(0, 6, 10))
    total = 0.0
    for v in vals:
        total += v
    assert mmhal_average(vals) == pytest.approx(total / 10, abs=1e-12)
    with pytest.raises(ValueError):
        mmhal_average([])
    with pytest.raises(ValueError):
        mmhal_average([7])


counts = st.integers(0, 500)


@given(counts, counts, counts, counts, st.integers(1, 20))
def test_scale_invariance(tp, tn, fp, fn, c):
    cm = ConfusionMatrix(tp, tn, fp, fn)
    big = ConfusionMatrix(tp * c, tn * c, fp * c, fn * c)
    if cm.total:
        assert accuracy(big) == pytest.approx(accuracy(cm), abs=1e-12)
    if 2 * tp + fp + fn:
        assert f1(big) == pytest.approx(f1(cm), abs=1e-12)


@given(st.integers(1, 500), counts, counts, counts)
def test_f1_is_harmonic_mean(tp, tn, fp, fn):
    p, r = precision(ConfusionMatrix(tp, tn, fp, fn)), recall(ConfusionMatrix(tp, tn, fp, fn))
    assert f1(ConfusionMatrix(tp, tn, fp, fn)) == pytest.approx(2 * p * r / (p + r), abs=1e-12)


@given(st.floats(0, 100), st.floats(0, 100), st.floats(0, 100))
def test_amber_monotone(a, b, f):
    lo, hi = sorted((a, b))
    assert amber_score(hi, f) <= amber_score(lo, f)
    assert amber_score(f, lo) <= amber_score(f, hi)


@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=2, max_size=14), st.data())
def test_mme_additive(pairs, data):
    cats = [MmeCategory(str(i), a, b) for i, (a, b) in enumerate(pairs)]
    cut = data.draw(st.integers(1, len(cats) - 1))
    assert mme_score(cats) == pytest.approx(mme_score(cats[:cut]) + mme_score(cats[cut:]), abs=1e-9)
