import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from comparator.metrics import (
    UndefinedCorrelationError,
    auc,
    bimodality_dip,
    confusion_at_threshold,
    f1_at_threshold,
    oracle_threshold_accuracy,
    progression_slopes,
    score_distribution_summary,
    spearman,
    spearman_exact_p,
)

import oracles


def test_oracle_separable():
    r = oracle_threshold_accuracy([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1])
    assert r.accuracy == 1.0 and 0.2 < r.threshold < 0.8 and not r.degenerate


def test_oracle_all_equal_scores():
    r = oracle_threshold_accuracy([0.3] * 4, [0, 1, 0, 1])
    assert r.accuracy == 0.5 and r.degenerate
    assert r.threshold == -math.inf


def test_oracle_single_class_rejected():
    with pytest.raises(ValueError):
        oracle_threshold_accuracy([0.1, 0.2], [1, 1])


def test_oracle_matches_exhaustive_n12():
    rng = np.random.default_rng(12)
    s = np.round(rng.standard_normal(12), 1)
    y = np.array([0, 1] * 6)
    acc, t = oracles.threshold_search(list(s), list(y))
    r = oracle_threshold_accuracy(s, y)
    assert (r.accuracy, r.threshold) == (acc, t)


def test_auc_cases():
    assert auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
    # one positive tied with one negative: pairs (0.5 vs 0.5) -> 1/2, (0.5 vs 0.1) -> 1
    assert auc([0.1, 0.5, 0.5], [0, 0, 1]) == 0.75


def test_auc_random_near_half():
    rng = np.random.default_rng(0)
    s = rng.standard_normal(4000)
    y = rng.integers(0, 2, 4000)
    se = math.sqrt((4000 + 1) / (12 * 2000 * 2000))  # null SD of the AUC
    assert abs(auc(s, y) - 0.5) < 4 * se


def test_f1_cases():
    assert f1_at_threshold([0.1, 0.9], [0, 1], 0.5) == 1.0
    assert f1_at_threshold([0.1, 0.2], [0, 1], 0.5) == 0.0
    s = [0.1, 0.2, 0.7, 0.6, 0.8, 0.9]
    y = [0, 1, 0, 1, 1, 1]
    c = confusion_at_threshold(s, y, 0.5)
    assert (c.tp, c.fp, c.fn) == (3, 1, 1)
    assert f1_at_threshold(s, y, 0.5) == pytest.approx(6 / 8)


def test_spearman_extremes():
    rho, p = spearman([1, 2, 3, 4, 5], [2, 4, 6, 8, 10])
    assert rho == 1.0 and p < 1e-6
    assert spearman([1, 2, 3], [3, 2, 1])[0] == -1.0


def test_spearman_random_15_matches_oracle():
    rng = np.random.default_rng(15)
    x = rng.standard_normal(15)
    y = rng.integers(0, 5, 15).astype(float)
    assert abs(spearman(x, y)[0] - oracles.spearman_rank_then_pearson(x, y)) < 1e-12


def test_spearman_errors():
    with pytest.raises(UndefinedCorrelationError):
        spearman([1, 2, 3], [4, 4, 4])
    with pytest.raises(ValueError):
        spearman([1, 2], [1, 2])


def test_spearman_t_pvalue_close_to_scipy():
    from scipy import stats

    rng = np.random.default_rng(3)
    x, y = rng.standard_normal(30), rng.standard_normal(30)
    ref = stats.spearmanr(x, y)
    rho, p = spearman(x, y)
    assert rho == pytest.approx(ref.statistic, abs=1e-12)
    assert p == pytest.approx(ref.pvalue, rel=1e-9)


def test_spearman_exact_p_matches_permutation_oracle():
    rng = np.random.default_rng(8)
    x = rng.standard_normal(7)
    y = x + rng.standard_normal(7)
    assert spearman_exact_p(x, y) == pytest.approx(oracles.permutation_p(x, y), abs=1e-12)


def test_progression_slopes():
    prog = progression_slopes(["a", "a", "b", "b", "b", "c"], [0, 100, 0, 50, 50, 10],
                              [0.1, 0.3, 1.0, 1.0, 1.0, 0.2])
    assert prog.slopes["a"] == pytest.approx(0.002)
    assert prog.slopes["b"] == 0.0
    assert prog.skipped == ["c"]


def test_progression_uses_assessment_means():
    # the day-10 visit has four recordings; a per-sample fit would weight it 4x
    t = [0, 10, 10, 10, 10, 30]
    s = [0, 4, 3, 5, 4, 0]
    prog = progression_slopes(["a"] * 6, t, s)
    expected = np.polyfit([0, 10, 30], [0, 4, 0], 1)[0]
    assert prog.slopes["a"] == pytest.approx(expected, rel=1e-12)
    assert abs(expected - np.polyfit(t, s, 1)[0]) > 1e-3


def test_distribution_single_group_quantiles():
    v = np.arange(11.0)
    d = score_distribution_summary(v, ["HC"] * 11, bins=5)
    g = d.groups["HC"]
    assert (g["min"], g["q1"], g["median"], g["q3"], g["max"]) == (0, 2.5, 5, 7.5, 10)
    assert sum(g["histogram"]) == 11 and len(d.bin_edges) == 6


def test_distribution_omitted_group():
    d = score_distribution_summary([0.0, 1.0], ["0", "4"], expected_groups=range(5))
    assert d.omitted == ["1", "2", "3"]
    assert list(d.groups) == ["0", "4"]


def test_bimodality_dip():
    rng = np.random.default_rng(1)
    s = np.concatenate([rng.normal(0, 0.3, 300), rng.normal(4, 0.3, 300)])
    y = np.repeat([0, 1], 300)
    assert bimodality_dip(s, y) < 0.1
    overlap = np.concatenate([rng.normal(0, 1, 300), rng.normal(0.2, 1, 300)])
    assert bimodality_dip(overlap, y) == 1.0


# -- properties -------------------------------------------------------------

scored = st.integers(4, 40).flatmap(lambda n: st.tuples(
    st.lists(st.integers(-6, 6).map(lambda v: v / 2), min_size=n, max_size=n),
    st.lists(st.integers(0, 1), min_size=n, max_size=n)))


@settings(max_examples=150)
@given(scored, st.floats(0.1, 10), st.floats(-5, 5))
def test_affine_invariance(data, a, b):
    s, y = data
    if len(set(y)) < 2:
        return
    s = np.array(s)
    t = a * s + b
    assert oracle_threshold_accuracy(s, y).accuracy == oracle_threshold_accuracy(t, y).accuracy
    assert auc(s, y) == auc(t, y)
    if len(set(s.tolist())) > 1:
        assert spearman(s, y)[0] == pytest.approx(spearman(t, y)[0], abs=1e-12)


@given(st.lists(st.floats(-100, 100), min_size=3, max_size=30))
def test_spearman_bounds_and_self(x):
    if len(set(x)) < 2:
        return
    rho, p = spearman(x, x)
    assert rho == 1.0
    y = x[::-1]
    if len(set(y)) > 1:
        r = spearman(x, y)[0]
        assert -1.0 <= r <= 1.0


@given(st.lists(st.floats(-5, 5), min_size=4, max_size=20), st.floats(0.5, 3))
def test_progression_slope_sign_and_scale(s, a):
    n = len(s)
    sid = ["x"] * n
    t = list(range(n))
    base = progression_slopes(sid, t, s).slopes["x"]
    scaled = progression_slopes(sid, t, [a * v + 1 for v in s]).slopes["x"]
    assert scaled == pytest.approx(a * base, abs=1e-10)
