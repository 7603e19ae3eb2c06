import numpy as np
import pytest

from emofed.metrics import confusion, evaluate, pct, report

from oracles import brute_force_metrics


def test_confusion_examples():
    assert np.array_equal(confusion([0, 1, 2], [0, 1, 2], k=3), np.diag([1, 1, 1]))
    cm = confusion([0, 1], [1, 1], k=2)
    assert cm[1, 0] == 1 and cm[1, 1] == 1 and cm.sum() == 2
    with pytest.raises(ValueError):
        confusion([], [], k=2)
    with pytest.raises(ValueError):
        confusion([0], [0, 1], k=2)


def test_perfect_predictions():
    r = evaluate([0, 1, 2, 2], [0, 1, 2, 2], k=3)
    assert r.precision == r.recall == r.f1 == r.accuracy == 1.0


def test_hand_case():
    r = report(np.array([[3, 1], [2, 4]]))
    assert r.precision == pytest.approx(0.72, abs=1e-12)
    assert r.recall == pytest.approx(0.70, abs=1e-12)
    f_expected = 0.4 * (2 * 0.6 * 0.75 / 1.35) + 0.6 * (2 * 0.8 * (2 / 3) / (0.8 + 2 / 3))
    assert r.f1 == pytest.approx(f_expected, abs=1e-12)
    # per-class F1 = 2/3 and 8/11, so the weighted F1 is exactly 116/165
    assert r.f1 == pytest.approx(116 / 165, abs=1e-12)


def test_single_predicted_class():
    truths = list(range(10)) * 5
    r = evaluate([3] * 50, truths)
    assert r.recall == pytest.approx(0.1) and r.accuracy == pytest.approx(0.1)
    assert r.zero_division == 9


def test_zero_support_class_has_no_weight():
    r = evaluate([0, 0, 1], [0, 0, 0], k=3)
    assert r.precision == pytest.approx(1.0)
    assert r.recall == pytest.approx(2 / 3)


@pytest.mark.parametrize("seed", range(50))
def test_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(2, 11))
    n = int(rng.integers(1, 80))
    truths = rng.integers(0, k, n).tolist()
    preds = rng.integers(0, k, n).tolist()
    r = evaluate(preds, truths, k)
    P, R, F, A = brute_force_metrics(preds, truths, k)
    assert abs(r.precision - P) <= 1e-12
    assert abs(r.recall - R) <= 1e-12
    assert abs(r.f1 - F) <= 1e-12
    assert abs(r.accuracy - A) <= 1e-12
    assert abs(r.recall - r.accuracy) <= 1e-12


@pytest.mark.parametrize("seed", range(10))
def test_invariant_under_class_relabeling(seed):
    rng = np.random.default_rng(seed)
    truths = rng.integers(0, 6, 40)
    preds = rng.integers(0, 6, 40)
    perm = rng.permutation(6)
    a = evaluate(preds, truths, 6)
    b = evaluate(perm[preds], perm[truths], 6)
    for attr in ("precision", "recall", "f1", "accuracy"):
        assert getattr(a, attr) == pytest.approx(getattr(b, attr), abs=1e-12)


def test_confusions_merge_by_addition():
    rng = np.random.default_rng(0)
    t, p = rng.integers(0, 4, 30), rng.integers(0, 4, 30)
    whole = confusion(p, t, 4)
    assert np.array_equal(whole, confusion(p[:10], t[:10], 4) + confusion(p[10:], t[10:], 4))


def test_pct_formatting():
    assert pct(0.63354) == "63.35"
    assert pct(1.0) == "100.00"
