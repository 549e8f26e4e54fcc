import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from certspn.splitters import (
    QUANTIZED,
    REPLAY,
    UnionFind,
    connected_components,
    fit_clusters,
    fit_independence,
    remove_from_clusters,
    remove_from_independence,
)
from conftest import make_dataset


def lloyd_oracle(X, init, step=0.0, phase=None, cap=100):
    """Plain-python Lloyd iterations, written independently of the library."""
    C = [list(c) for c in init]
    labels = []
    for _ in range(cap):
        labels = []
        for x in X:
            d = [sum((a - b) ** 2 for a, b in zip(x, c)) for c in C]
            labels.append(d.index(min(d)))
        newC = [list(c) for c in C]
        for j in range(len(C)):
            members = [x for x, l in zip(X, labels) if l == j]
            if members:
                mean = [sum(col) / len(members) for col in zip(*members)]
                if step:
                    mean = [p + step * round((m - p) / step) for m, p in zip(mean, phase)]
                newC[j] = mean
        if newC == C:
            break
        C = newC
    return labels


def partition_of(model):
    return [set(p.tolist()) for p in model.partition()]


@pytest.mark.parametrize("strategy", [REPLAY, QUANTIZED])
@pytest.mark.parametrize("seed", range(5))
def test_two_separated_blobs(strategy, seed):
    ds = make_dataset(np.r_[np.zeros(10), np.full(10, 10.0)][:, None])
    m = fit_clusters(ds.full_view(), seed, k=2, strategy=strategy)
    assert m.clusters_exist
    assert sorted(map(len, partition_of(m))) == [10, 10]
    X = ds.encoded.tolist()
    assert m.assignment.tolist() == lloyd_oracle(X, m.init_centroids.tolist(), m.quant_step, m.phase)


@pytest.mark.parametrize("strategy", [REPLAY, QUANTIZED])
def test_matches_lloyd_oracle_on_random_data(strategy):
    rng = np.random.default_rng(11)
    for seed in range(20):
        ds = make_dataset(rng.uniform(0, 10, size=(int(rng.integers(3, 30)), 3)))
        m = fit_clusters(ds.full_view(), seed, k=3, strategy=strategy)
        expect = lloyd_oracle(ds.encoded.tolist(), m.init_centroids.tolist(), m.quant_step, m.phase)
        assert m.assignment.tolist() == expect


def test_identical_rows_give_no_clusters():
    ds = make_dataset(np.full((8, 2), 3.0))
    m = fit_clusters(ds.full_view(), 1)
    assert not m.clusters_exist
    assert len(m.partition()) == 1


def test_fit_is_deterministic_and_data_independent_init():
    ds = make_dataset(np.random.default_rng(0).uniform(0, 10, (20, 2)))
    a = fit_clusters(ds.full_view(), 42)
    b = fit_clusters(ds.full_view(), 42)
    c = fit_clusters(ds.full_view().with_rows(np.arange(10)), 42)
    assert np.array_equal(a.assignment, b.assignment)
    assert np.array_equal(a.init_centroids, c.init_centroids)


@pytest.mark.parametrize("strategy", [REPLAY, QUANTIZED])
def test_remove_from_tight_blob_is_unchanged(strategy):
    ds = make_dataset(np.r_[np.linspace(0, 0.2, 10), np.linspace(9.8, 10, 10)][:, None])
    view = ds.full_view()
    m = fit_clusters(view, 3, strategy=strategy)
    unchanged, new = remove_from_clusters(m, 4, view.with_rows(np.delete(view.row_ids, 4)))
    assert unchanged
    assert len(new.row_ids) == 19


@pytest.mark.parametrize("strategy", [REPLAY, QUANTIZED])
def test_removing_a_singleton_cluster_changes_partition(strategy):
    ds = make_dataset(np.r_[np.zeros(10), [10.0]][:, None])
    view = ds.full_view()
    m = fit_clusters(view, 5, strategy=strategy)
    assert sorted(map(len, partition_of(m))) == [1, 10]
    unchanged, new = remove_from_clusters(m, 10, view.with_rows(np.arange(10)))
    assert not unchanged and not new.clusters_exist


def test_remove_unknown_row_errors():
    ds = make_dataset(np.arange(6.0)[:, None])
    m = fit_clusters(ds.view([0, 1, 2]), 0)
    with pytest.raises(KeyError):
        remove_from_clusters(m, 5, ds.view([0, 1]))


@given(st.integers(4, 20), st.integers(0, 2**32), st.sampled_from([REPLAY, QUANTIZED]), st.data())
def test_clustering_removal_contract(n, seed, strategy, data):
    rng = np.random.default_rng(seed)
    ds = make_dataset(np.round(rng.uniform(0, 10, size=(n, 2)), 1))
    view = ds.full_view()
    m = fit_clusters(view, seed, strategy=strategy)
    x = data.draw(st.integers(0, n - 1))
    survivors = view.with_rows(np.delete(view.row_ids, x))
    unchanged, new = remove_from_clusters(m, x, survivors)
    refit = fit_clusters(survivors, seed, strategy=strategy)
    same = np.array_equal(np.delete(m.assignment, x), refit.assignment) and np.array_equal(
        m.cluster_counts > 0, refit.cluster_counts > 0
    )
    assert unchanged == same
    assert np.array_equal(new.assignment, refit.assignment)


def test_independent_columns_split_most_of_the_time():
    splits = 0
    for seed in range(20):
        X = np.random.default_rng(seed).uniform(0, 10, (200, 2))
        splits += fit_independence(make_dataset(X).full_view(), seed).independencies_exist
    assert splits >= 18


def test_identical_columns_stay_together():
    x = np.random.default_rng(1).uniform(0, 10, 200)
    m = fit_independence(make_dataset(np.c_[x, x]).full_view(), 3)
    assert m.coefficients[0, 1] == pytest.approx(1.0)
    assert m.components == ((0, 1),)


def test_coefficients_symmetric_unit_diagonal():
    X = np.random.default_rng(2).uniform(0, 10, (50, 4))
    m = fit_independence(make_dataset(X).full_view(), 9)
    assert np.array_equal(m.coefficients, m.coefficients.T)
    assert np.all(np.diag(m.coefficients) == 1.0)
    assert np.array_equal(m.adjacency, m.coefficients >= m.threshold)


def test_single_row_drives_the_dependency():
    # the second column is constant except on the row with the largest first value
    X = np.c_[np.arange(6.0), np.r_[np.zeros(5), 5.0]]
    view = make_dataset(X).full_view()
    m = fit_independence(view, 0)
    assert m.components == ((0, 1),)
    unchanged, new = remove_from_independence(m, 5, view.with_rows(np.arange(5)))
    assert not unchanged and new.components == ((0,), (1,))


def test_two_variable_dependent_model_stays_unchanged():
    x = np.linspace(0, 10, 30)
    view = make_dataset(np.c_[x, x]).full_view()
    m = fit_independence(view, 4)
    unchanged, new = remove_from_independence(m, 7, view.with_rows(np.delete(np.arange(30), 7)))
    assert unchanged and np.array_equal(new.weights, m.weights)


@given(st.integers(5, 25), st.integers(0, 2**32), st.data())
def test_independence_removal_contract(n, seed, data):
    rng = np.random.default_rng(seed)
    view = make_dataset(np.round(rng.uniform(0, 10, size=(n, 3)), 1)).full_view()
    m = fit_independence(view, seed, n_features=3)
    x = data.draw(st.integers(0, n - 1))
    survivors = view.with_rows(np.delete(view.row_ids, x))
    unchanged, _ = remove_from_independence(m, x, survivors)
    refit = fit_independence(survivors, seed, n_features=3)
    assert unchanged == (refit.components == m.components)


@pytest.mark.parametrize(
    "adj, expected",
    [
        (np.eye(4, dtype=bool), ((0,), (1,), (2,), (3,))),
        (np.ones((4, 4), dtype=bool), ((0, 1, 2, 3),)),
        ([[1, 1, 0, 0], [1, 1, 0, 0], [0, 0, 1, 1], [0, 0, 1, 1]], ((0, 1), (2, 3))),
        ([[1, 1, 0], [1, 1, 0], [0, 0, 1]], ((0, 1), (2,))),
    ],
)
def test_connected_components(adj, expected):
    assert connected_components(adj) == expected


@given(st.integers(1, 12), st.lists(st.tuples(st.integers(0, 11), st.integers(0, 11)), max_size=20))
def test_components_match_union_find_partition(n, edges):
    adj = np.eye(n, dtype=bool)
    uf = UnionFind(n)
    for a, b in edges:
        if a < n and b < n:
            adj[a, b] = adj[b, a] = True
            uf.union(a, b)
    comps = connected_components(adj)
    assert sorted(v for c in comps for v in c) == list(range(n))
    assert [c[0] for c in comps] == sorted(c[0] for c in comps)
    for c in comps:
        assert len({uf.find(v) for v in c}) == 1
