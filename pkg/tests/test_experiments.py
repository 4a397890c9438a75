import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from conftest import tiny_config
from metaqa.errors import ConfigError
from metaqa.evaluation import evaluate
from metaqa.experiments import compare_runs, efficiency_sweep, prefix_sample
from metaqa.training import train


def test_prefix_sample(tiny_bench):
    train_set = tiny_bench["train"]
    sub = prefix_sample(train_set, 50, seed=3)
    assert len(sub) == 50
    pos = [train_set.examples.index(ex) for ex in sub]
    assert pos == sorted(pos)
    assert prefix_sample(train_set, 50, seed=3) == sub
    assert prefix_sample(train_set, 10_000, seed=3) is train_set


def test_sweep_single_row(tiny_bench):
    rows = efficiency_sweep(tiny_bench["train"], tiny_bench["test"], [30], tiny_config())
    assert len(rows) == 1 and rows[0].size == 30 and rows[0].steps == 5


def test_sweep_full_size_matches_direct_run(tiny_bench, tiny_ckpt):
    n = len(tiny_bench["train"])
    (row,) = efficiency_sweep(tiny_bench["train"], tiny_bench["test"], [n], tiny_config(),
                              dev_set=tiny_bench["dev"])
    direct = evaluate(tiny_ckpt, tiny_bench["test"])
    assert row.selection_accuracy == direct.selection_accuracy
    assert row.score == direct.metrics.overall.score


def test_sweep_rejects_oversize(tiny_bench):
    with pytest.raises(ConfigError):
        efficiency_sweep(tiny_bench["train"], tiny_bench["test"], [10**6], tiny_config())


def test_compare_identical():
    res = compare_runs([0.5, 0.6, 0.7], [0.5, 0.6, 0.7])
    assert res.t == 0.0 and res.p == pytest.approx(1.0) and not res.significant


def test_compare_separated():
    res = compare_runs([10, 10.001, 9.999], [0, 0.001, -0.001])
    assert res.p < 1e-6 and res.significant


def test_compare_zero_variance():
    assert compare_runs([1, 1], [1, 1]).p == 1.0
    res = compare_runs([2, 2], [1, 1])
    assert res.significant and res.t == np.inf


def test_compare_textbook_pair_against_scipy():
    a, b = [2.1, 2.5, 2.3, 2.2], [1.9, 2.0, 2.1, 1.8]
    res = compare_runs(a, b)
    ref = stats.ttest_ind(a, b, equal_var=False)
    assert round(res.t, 4) == round(float(ref.statistic), 4)
    assert round(res.p, 4) == round(float(ref.pvalue), 4)


@pytest.mark.filterwarnings("ignore:Precision loss:RuntimeWarning")  # scipy, near-equal samples
@given(st.lists(st.floats(0, 1), min_size=2, max_size=8), st.lists(st.floats(0, 1), min_size=2, max_size=8))
def test_compare_matches_scipy(a, b):
    if np.var(a) + np.var(b) < 1e-6:
        return
    res = compare_runs(a, b)
    ref = stats.ttest_ind(a, b, equal_var=False)
    assert res.t == pytest.approx(float(ref.statistic), rel=1e-9, abs=1e-9)
    assert res.p == pytest.approx(float(ref.pvalue), rel=1e-7, abs=1e-12)


def test_compare_needs_two_samples():
    with pytest.raises(ConfigError):
        compare_runs([1.0], [1.0, 2.0])
