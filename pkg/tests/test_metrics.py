import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fqkl.metrics import evaluate, pr_auc, pr_curve


def test_perfect_separation():
    r = evaluate([2.0, 1.0, -1.0, -3.0], [1, 1, 0, 0])
    assert r.accuracy == 1.0 and r.pr_auc == 1.0 and r.f1 == 1.0


def test_all_negative_predictions_have_zero_recall():
    r = evaluate([-1.0] * 4, [1, 0, 1, 0])
    assert r.recall == 0.0 and r.precision == 0.0 and r.f1 == 0.0
    assert r.accuracy == 0.5


def test_hand_enumerated_curve():
    recall, precision = pr_curve([0.9, 0.8, 0.7, 0.6], [1, 0, 1, 0])
    np.testing.assert_allclose(recall, [0.5, 0.5, 1.0, 1.0])
    np.testing.assert_allclose(precision, [1.0, 0.5, 2 / 3, 0.5])
    # (0,1)->(0.5,1): 0.5; (0.5,0.5)->(1,2/3): 0.5*(0.5+2/3)/2
    expect = 0.5 + 0.5 * (0.5 + 2 / 3) / 2
    assert abs(pr_auc([0.9, 0.8, 0.7, 0.6], [1, 0, 1, 0]) - expect) <= 1e-15


def test_tied_scores_form_one_point():
    recall, precision = pr_curve([0.5] * 4, [1, 0, 0, 0])
    assert recall.tolist() == [1.0] and precision.tolist() == [0.25]
    assert pr_auc([0.5] * 4, [1, 0, 0, 0]) == pytest.approx((1 + 0.25) / 2)


def test_no_positives_gives_nan_auc():
    r = evaluate([0.1, -0.2], [0, 0])
    assert math.isnan(r.pr_auc)
    assert r.accuracy == 0.5 and r.fp == 1 and r.tn == 1


def test_zero_score_counts_as_negative():
    r = evaluate([0.0, 0.0], [1, 0])
    assert r.tp == 0 and r.fn == 1 and r.tn == 1


def test_input_validation():
    with pytest.raises(ValueError):
        evaluate([1.0], [1, 0])
    with pytest.raises(ValueError):
        evaluate([1.0, 2.0], [1, 2])


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 60),
       factor=st.floats(1e-3, 1e3))
def test_counts_consistent_and_scale_invariant(seed, n, factor):
    rng = np.random.default_rng(seed)
    s = np.round(rng.normal(size=n), 1)
    y = rng.integers(0, 2, n)
    a, b = evaluate(s, y), evaluate(s * factor, y)
    assert a.tp + a.fp + a.tn + a.fn == n
    assert (a.tp, a.fp, a.tn, a.fn) == (b.tp, b.fp, b.tn, b.fn)
    assert a.accuracy == pytest.approx((a.tp + a.tn) / n)
    if y.sum():
        assert 0.0 <= a.pr_auc <= 1.0
        assert a.pr_auc == pytest.approx(b.pr_auc, abs=1e-12)
