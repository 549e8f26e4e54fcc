import numpy as np
import pytest

from certspn.bench import mean_std, run_benchmark, run_train_overhead, synthetic_table
from certspn.learn import LearnConfig


def test_mean_std_population():
    assert mean_std([2.0]) == (2.0, 0.0)
    assert mean_std([1.0, 3.0]) == (2.0, 1.0)


def test_synthetic_table_shape_and_determinism():
    a, b = synthetic_table(50, seed=4), synthetic_table(50, seed=4)
    assert a.values.shape == (50, 8)
    assert np.array_equal(a.values, b.values)
    assert [v.kind for v in a.schema.variables].count("categorical") == 2


def test_single_repeat_benchmark():
    ds = synthetic_table(80, seed=1)
    report = run_benchmark(ds, LearnConfig(threshold=15), sample_size=60, m=3, repeats=1, seed=5)
    s = report.summary()
    assert s["unlearn_s"]["std"] == 0.0 and s["retrain_s"]["std"] == 0.0
    r = report.repeats[0]
    assert r.unlearn_s > 0 and r.retrain_s > 0 and len(set(r.schedule)) == 3
    again = run_benchmark(ds, LearnConfig(threshold=15), sample_size=60, m=3, repeats=1, seed=5)
    assert again.repeats[0].sample == r.sample and again.repeats[0].schedule == r.schedule
    assert report.records()[-1]["host"]["python"]


def test_benchmark_input_checks():
    ds = synthetic_table(30)
    with pytest.raises(ValueError, match="sample needs"):
        run_benchmark(ds, LearnConfig(), sample_size=100)
    with pytest.raises(ValueError):
        run_benchmark(ds, LearnConfig(), sample_size=20, m=20)


def test_overhead_trees_identical():
    report = run_train_overhead(synthetic_table(120, seed=2), LearnConfig(threshold=20), repeats=2)
    assert report.identical, report.difference
    assert report.summary()["ratio"] > 0
