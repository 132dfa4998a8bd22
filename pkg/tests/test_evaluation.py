import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import studentized_range

from mmpred.evaluation import (
    Q_TABLE, BootstrapError, MetricError, SplitError, SplitPlan, auprc, auroc, bootstrap_ci,
    cd_cliques, cd_diagram_data, compute_metrics, critical_difference, friedman_test,
    gap_significant, nemenyi_posthoc, nested_cv, rank_matrix, significant_pairs, stratified_folds, stratified_split,
)
from oracles import auroc_pairs, average_precision_thresholds, chi2_tail_even_df, threshold_metrics

COHORT_SHAPES = [(743, 281), (387, 111), (870, 458), (1890, 515)]


# metrics

def test_metric_examples():
    r = compute_metrics([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0])
    assert (r.auroc, r.auprc, r.sensitivity, r.specificity) == (1.0, 1.0, 1.0, 1.0)
    assert auroc([0.6, 0.4], [0, 1]) == 0.0
    p, y = [0.7, 0.6, 0.55, 0.4, 0.3], [1, 0, 1, 0, 0]
    assert auroc(p, y) == pytest.approx(5 / 6, abs=1e-12)
    assert auprc(p, y) == pytest.approx(average_precision_thresholds(p, y), abs=1e-12)
    assert auprc(p, y) == pytest.approx(0.5 * 1 + 0.5 * 2 / 3, abs=1e-12)
    tm = threshold_metrics(p, y)
    assert compute_metrics(p, y).f1_macro == pytest.approx(tm["f1_macro"], abs=1e-12)


def test_single_class_labels():
    with pytest.raises(MetricError):
        compute_metrics([0.2, 0.7], [1, 1])
    r = compute_metrics([0.2, 0.7], [1, 1], strict=False)
    assert r.auroc is None and r.sensitivity == 0.5
    with pytest.raises(MetricError):
        auroc([0.1, float("nan")], [0, 1])


def _fixtures_n_le_8():
    grid = [0.0, 0.25, 0.5, 0.75, 1.0]
    rng = np.random.default_rng(0)
    for n in range(2, 9):
        for _ in range(40):
            y = rng.integers(0, 2, n)
            if y.min() == y.max():
                continue
            yield rng.choice(grid, n), y


def test_metric_oracle_equivalence_small():
    for p, y in _fixtures_n_le_8():
        assert abs(auroc(p, y) - auroc_pairs(p, y)) <= 1e-12
        assert abs(auprc(p, y) - average_precision_thresholds(list(p), list(y))) <= 1e-12
        r, o = compute_metrics(p, y), threshold_metrics(p, y)
        for k in ("f1_macro", "sensitivity", "specificity"):
            assert abs(getattr(r, k) - o[k]) <= 1e-12


@settings(max_examples=80, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1), st.integers(0, 1)), min_size=2, max_size=30))
def test_metrics_in_unit_interval(rows):
    p = np.array([r[0] for r in rows])
    y = np.array([r[1] for r in rows])
    if y.min() == y.max():
        return
    r = compute_metrics(p, y)
    for v in (r.auroc, r.auprc, r.f1_macro, r.sensitivity, r.specificity):
        assert 0.0 <= v <= 1.0
    assert auroc(p, y) == pytest.approx(auroc_pairs(p, y), abs=1e-12)


# splits

def test_split_example():
    y = np.r_[np.ones(30, int), np.zeros(70, int)]
    dev, hold = stratified_split(y, 0.8, 0)
    assert y[dev].sum() == 24 and (y[dev] == 0).sum() == 56


@pytest.mark.parametrize("n,pos", COHORT_SHAPES)
def test_split_and_folds_preserve_prevalence(n, pos):
    y = np.zeros(n, int)
    y[np.random.default_rng(n).permutation(n)[:pos]] = 1
    dev, hold = stratified_split(y, 0.8, 3)
    assert abs(y[dev].sum() - 0.8 * pos) <= 1
    if n == 743:
        assert y[dev].sum() in (224, 225)
    assert len(np.intersect1d(dev, hold)) == 0 and len(dev) + len(hold) == n
    folds = stratified_folds(y, 5, 1)
    tests = np.concatenate([te for _, te in folds])
    assert np.array_equal(np.sort(tests), np.arange(n))
    for tr, te in folds:
        assert abs(y[te].sum() - len(te) * pos / n) <= 1
        assert abs(y[tr].sum() - len(tr) * pos / n) <= 1


def test_split_errors():
    with pytest.raises(SplitError):
        stratified_split([1, 0, 0, 0], 0.8)
    with pytest.raises(SplitError):
        stratified_split([1, 1, 0, 0], 1.0)
    with pytest.raises(SplitError):
        SplitPlan(dev_fraction=1.0).validate()


def test_split_determinism():
    y = np.arange(50) % 3 == 0
    assert all(np.array_equal(a, b) for a, b in zip(stratified_split(y, 0.8, 5), stratified_split(y, 0.8, 5)))


# bootstrap

def test_bootstrap_perfect_separation():
    p = np.r_[np.linspace(0.6, 0.9, 10), np.linspace(0.1, 0.4, 10)]
    y = np.r_[np.ones(10, int), np.zeros(10, int)]
    r = bootstrap_ci(p, y, "auroc", B=300, seed=0)
    assert (r.lower, r.upper) == (1.0, 1.0)


def test_bootstrap_contains_estimate_and_reproducible():
    rng = np.random.default_rng(0)
    for i in range(20):
        y = (rng.random(60) < 0.4).astype(int)
        p = np.clip(0.5 * y + rng.normal(0.25, 0.25, 60), 0, 1)
        r = bootstrap_ci(p, y, "auroc", B=2000, seed=i)
        assert 0 <= r.lower <= r.estimate <= r.upper <= 1
    a = bootstrap_ci(p, y, "auprc", B=200, seed=4)
    b = bootstrap_ci(p, y, "auprc", B=200, seed=4)
    assert (a.lower, a.upper) == (b.lower, b.upper)


def test_bootstrap_errors():
    with pytest.raises(BootstrapError):
        bootstrap_ci([0.1] * 5, [0, 1, 0, 1, 0])
    # every resample of single-class labels is degenerate
    with pytest.raises(BootstrapError):
        bootstrap_ci(np.linspace(0, 1, 40), np.ones(40, int), B=200)


def test_bootstrap_redraws_counted():
    y = np.zeros(12, int)
    y[:2] = 1
    r = bootstrap_ci(np.linspace(0, 1, 12), y, B=500, seed=1)
    assert r.n_redrawn > 0 and len(r.samples) == 500


# rank statistics

def test_friedman_hand_example():
    stat, p = friedman_test([[0.9, 0.8, 0.7]] * 4)
    assert stat == 8.0
    assert p == pytest.approx(np.exp(-4), abs=1e-12)
    assert p == pytest.approx(chi2_tail_even_df(8.0, 2), abs=1e-12)
    assert abs(p - 0.0183) <= 1e-3


def test_friedman_constant_and_permuted():
    assert friedman_test([[0.5, 0.5, 0.5]] * 4) == (0.0, 1.0)
    weaker, _ = friedman_test([[0.9, 0.8, 0.7]] * 3 + [[0.7, 0.8, 0.9]])
    # mean ranks (1.5, 2, 2.5) -> 12*4/12 * (2.25 + 4 + 6.25 - 12) = 2
    assert weaker == pytest.approx(2.0)


def test_friedman_input_errors():
    with pytest.raises(ValueError):
        friedman_test([[1, 2, 3]])
    with pytest.raises(ValueError):
        friedman_test([[1, 2]] * 4)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 6), st.integers(3, 6), st.integers(0, 10_000))
def test_rank_row_sums(N, k, seed):
    S = np.random.default_rng(seed).integers(0, 3, size=(N, k))  # many ties
    rm = rank_matrix(S)
    np.testing.assert_allclose(rm.ranks.sum(axis=1), k * (k + 1) / 2, atol=1e-9)


def test_q_table_against_scipy_and_published():
    for a, row in Q_TABLE.items():
        for k, q in row.items():
            assert q == pytest.approx(studentized_range.ppf(1 - a, k, np.inf), abs=5e-6)
    # published Nemenyi q_0.05 values (studentized range / sqrt 2), k = 2..10
    pub = [1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164]
    for k, v in zip(range(2, 11), pub):
        assert Q_TABLE[0.05][k] / np.sqrt(2) == pytest.approx(v, abs=1e-3)


def test_critical_difference_formula():
    assert critical_difference(3, 10) == pytest.approx(Q_TABLE[0.05][3] * np.sqrt(0.1), abs=1e-12)
    for k in range(2, 11):
        for N in (4, 10, 25):
            cd = critical_difference(k, N, 0.05)
            assert cd == pytest.approx(Q_TABLE[0.05][k] * np.sqrt(k * (k + 1) / (12 * N)), abs=1e-6)
            # same CD in the published convention: q/sqrt2 * sqrt(k(k+1)/(6N))
            assert cd == pytest.approx(Q_TABLE[0.05][k] / np.sqrt(2) * np.sqrt(k * (k + 1) / (6 * N)), abs=1e-6)


def test_nemenyi_matrix_properties():
    S = np.random.default_rng(1).random((12, 5))
    p = nemenyi_posthoc(S)
    np.testing.assert_array_equal(p, p.T)
    np.testing.assert_array_equal(np.diag(p), 1.0)
    assert ((p >= 0) & (p <= 1)).all()
    tied = nemenyi_posthoc([[0.5, 0.5, 0.1]] * 4)
    assert tied[0, 1] == 1.0


def test_nemenyi_p_at_cd_is_alpha():
    k, N = 4, 10
    cd = critical_difference(k, N)
    se = np.sqrt(k * (k + 1) / (12 * N))
    assert studentized_range.sf(cd / se, k, np.inf) == pytest.approx(0.05, abs=1e-5)


def test_boundary_gap_equal_to_cd_is_significant():
    k, N = 3, 10
    cd = critical_difference(k, N)

    sig = gap_significant([1.0, 1.0 + cd, 2.0], cd)
    assert sig[0, 1] and not sig[0, 2]


def test_cd_cliques_examples():
    assert cd_cliques([2.0, 2.0, 2.0], 0.5) == [[0, 1, 2]]
    assert cd_cliques([1.0, 1.1, 3.9], 0.5) == [[0, 1], [2]]
    assert cd_cliques([1, 2, 3], 1.5) == [[0, 1], [1, 2]]
    d = cd_diagram_data([3.0, 1.0, 2.0], 1.5, ["a", "b", "c"])
    assert d.cliques == [[1, 2], [2, 0]] and d.bars() == [(1.0, 2.0), (2.0, 3.0)]


def test_cd_cliques_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(50):
        r = np.sort(rng.uniform(1, 5, rng.integers(2, 7)))
        cd = rng.uniform(0.2, 2)
        got = {tuple(c) for c in cd_cliques(r, cd)}
        intervals = [tuple(range(i, j + 1)) for i in range(len(r)) for j in range(i, len(r))
                     if r[j] - r[i] < cd]
        maximal = {s for s in intervals if not any(set(s) < set(o) for o in intervals)}
        assert got == maximal


# nested cross-validation

class _Rec:
    seen: list = []

    def __init__(self, c):
        self.c = c

    def fit(self, X, y, Xv=None, yv=None):
        _Rec.seen.append((X[:, 0].copy(), None if Xv is None else Xv[:, 0].copy()))
        self.w = np.sign(np.corrcoef(X[:, 1], y)[0, 1]) * self.c
        return self

    def predict_proba(self, X):
        return 1 / (1 + np.exp(-self.w * X[:, 1]))


def test_nested_cv_partitions_and_no_leakage():
    n = 1000
    rng = np.random.default_rng(0)
    y = (rng.random(n) < 0.3).astype(int)
    X = np.c_[np.arange(n), y + rng.normal(0, 1, n)]
    _Rec.seen = []
    res = nested_cv([("a", lambda: _Rec(1.0)), ("b", lambda: _Rec(2.0))], X, y,
                    SplitPlan(mode="nested", seed=1))
    assert len(res.folds) == 5
    assert all(len(f.test_idx) == 200 for f in res.folds)
    assert np.array_equal(np.sort(res.pooled_index), np.arange(n))
    inner_sizes = {(len(a), len(b)) for a, b in _Rec.seen if b is not None and len(a) + len(b) == 800}
    assert (640, 160) in inner_sizes
    for f in res.folds:
        assert np.intersect1d(f.inner_idx, f.test_idx).size == 0
    seen_ids = np.concatenate([np.r_[a, b] for a, b in _Rec.seen])
    assert res.pooled_probs.shape == (n,)
    assert len(seen_ids) > 0


def test_tripod_mode():
    n = 200
    y = np.arange(n) % 4 == 0
    X = np.c_[np.arange(n), y + np.random.default_rng(1).normal(0, 1, n)]
    res = nested_cv([("a", lambda: _Rec(1.0))], X, y.astype(int), SplitPlan(mode="tripod2a"))
    assert len(res.folds) == 1 and len(res.folds[0].test_idx) == 40


def test_nested_degenerate_inner_fold():
    y = np.r_[np.ones(6, int), np.zeros(60, int)]
    X = np.c_[np.arange(66), y.astype(float)]
    with pytest.raises(SplitError):
        nested_cv([("a", lambda: _Rec(1.0))], X, y, SplitPlan(mode="nested"))
