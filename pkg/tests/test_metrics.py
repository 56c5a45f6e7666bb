import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import spearmanr

from gedforge.metrics import metric_mse, metric_p_at_k, metric_spearman, spearman


def test_perfect_predictions():
    rng = np.random.default_rng(0)
    labels = [rng.random(12) for _ in range(3)]
    assert metric_mse(labels, labels) == 0.0
    assert metric_spearman(labels, labels) == 1.0
    assert metric_p_at_k(labels, labels, 10) == 1.0


def test_reversed_ranking():
    x = np.arange(8.0)
    assert metric_spearman([x], [-x]) == pytest.approx(-1.0)


def test_hand_computed_tie():
    pred = [0.1, 0.4, 0.4, 0.8, 0.9]
    label = [1, 2, 3, 4, 5]
    # pred ranks (1, 2.5, 2.5, 4, 5), mean 3; deviations (-2, -.5, -.5, 1, 2)
    # label deviations (-2, -1, 0, 1, 2): cov 4+.5+0+1+4 = 9.5
    # var_p = 4+.25+.25+1+4 = 9.5, var_l = 10
    assert spearman(np.array(pred), np.array(label)) == pytest.approx(9.5 / math.sqrt(9.5 * 10), abs=1e-15)


def test_mse_value():
    assert metric_mse([0.2], [0.7]) == pytest.approx(0.25)
    assert metric_mse([[0.0, 1.0], [0.5]], [[1.0, 1.0], [0.5]]) == pytest.approx(1 / 3)


def test_constant_query_skipped():
    assert math.isnan(spearman(np.ones(4), np.arange(4.0)))
    q = [np.ones(4), np.arange(4.0)]
    assert metric_spearman(q, [np.arange(4.0), np.arange(4.0)]) == 1.0


def test_p_at_k_ties_broken_by_id():
    labels = [np.array([0.5, 0.5, 0.1])]
    preds = [np.array([0.9, 0.1, 0.8])]
    # label top-1 is index 0 (lowest id among the tie); prediction agrees
    assert metric_p_at_k(preds, labels, 1, ids=["a", "b", "c"]) == 1.0
    assert metric_p_at_k(preds, labels, 1, ids=["z", "b", "c"]) == 0.0
    assert metric_p_at_k(preds, labels, 2) == 0.5


def test_k_larger_than_corpus():
    with pytest.raises(ValueError):
        metric_p_at_k([np.ones(3)], [np.ones(3)], 10)


@pytest.mark.filterwarnings("ignore::scipy.stats.ConstantInputWarning")
@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 5), min_size=3, max_size=15), st.integers(0, 2**31))
def test_spearman_matches_scipy(xs, seed):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 4, size=len(xs)).astype(float)
    x = np.array(xs, dtype=float)
    want = spearmanr(x, y).statistic
    got = spearman(x, y)
    if math.isnan(want):
        assert math.isnan(got)
    else:
        assert got == pytest.approx(want, abs=1e-12)
