import dataclasses

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from certspn.learn import (
    Decision,
    LearnConfig,
    decide_operation,
    derive_child_seed,
    learn_spn,
    naive_factorization,
    root_seed,
    same_shape,
    split_uninformative,
    split_variables,
    train,
    train_plain,
)
from certspn.spn import LEAF, PRODUCT, SUM, Op, iter_nodes, structural_equal, validate
from certspn.splitters import IndependenceModel, fit_clusters
from conftest import make_dataset, two_blobs


def test_config_validation():
    with pytest.raises(ValueError):
        LearnConfig(threshold=0)
    with pytest.raises(ValueError):
        LearnConfig(k=1)
    assert LearnConfig.from_dict(LearnConfig().to_dict()) == LearnConfig()


def test_seed_derivation():
    assert derive_child_seed(7, 3) == derive_child_seed(7, 3)
    assert root_seed(5) == derive_child_seed(5, 0)
    rng = np.random.default_rng(0)
    parents = rng.integers(0, 2**63, size=100_000, dtype=np.int64).tolist()
    assert all(derive_child_seed(s, 0) != derive_child_seed(s, 1) for s in parents)


def test_seeds_depend_only_on_path():
    a = train(two_blobs(30, 2, seed=1), LearnConfig(threshold=5, master_seed=9))
    b = train(two_blobs(30, 2, seed=2), LearnConfig(threshold=5, master_seed=9))
    seeds_a = {n.state.path: n.state.seed for n in iter_nodes(a.root)}
    seeds_b = {n.state.path: n.state.seed for n in iter_nodes(b.root)}
    for path in seeds_a.keys() & seeds_b.keys():
        assert seeds_a[path] == seeds_b[path]


def test_decide_examples():
    cfg = LearnConfig(threshold=5)
    single = make_dataset(np.arange(4.0)[:, None]).full_view()
    assert decide_operation(single, cfg, 0).op == Op.CL
    const = make_dataset(np.full((6, 3), 5.0)).full_view()
    d = decide_operation(const, cfg, 0)
    assert (d.op, d.exist_uninformative, d.all_uninformative) == (Op.NF, True, True)
    small = make_dataset(np.random.default_rng(0).uniform(0, 10, (5, 3))).full_view()
    d = decide_operation(small, cfg, 0)
    assert d.op == Op.NF and d.clustering is None and d.independence is None


def test_independent_columns_give_a_product_root():
    X = np.random.default_rng(3).uniform(0, 10, (200, 2))
    spn = train(make_dataset(X), LearnConfig(threshold=50, master_seed=3))
    assert spn.root.op == Op.SV and spn.root.kind == PRODUCT
    assert [c.scope for c in spn.root.children] == [(0,), (1,)]


def test_two_blobs_give_a_sum_root_with_blob_counts():
    ds = two_blobs(25, 2, seed=4)
    cfg = LearnConfig(threshold=10, master_seed=4)
    spn = train(ds, cfg)
    assert spn.root.op == Op.SD and spn.root.kind == SUM
    oracle = fit_clusters(ds.full_view(), root_seed(4))
    assert spn.root.child_counts == [int(p.size) for p in oracle.partition()]
    assert sorted(spn.root.child_counts) == [25, 25]
    rows = [set(c.state.data.tolist()) for c in spn.root.children]
    assert rows[0].isdisjoint(rows[1]) and rows[0] | rows[1] == set(range(50))


def test_naive_factorization_shape():
    ds = make_dataset(np.random.default_rng(0).uniform(0, 10, (7, 3)))
    node = naive_factorization(ds.full_view(), LearnConfig(), 1, (), Decision(Op.NF))
    assert [c.scope for c in node.children] == [(0,), (1,), (2,)]
    assert all(c.state.num_data == 7 for c in node.children)


def test_split_uninformative_shapes():
    rng = np.random.default_rng(1)
    X = np.c_[np.full(30, 2.0), rng.uniform(0, 10, 30), rng.uniform(0, 10, 30)]
    view = make_dataset(X).full_view()
    cfg = LearnConfig(threshold=50)
    node = learn_spn(view, cfg, 0)
    assert node.op == Op.SU
    assert [c.scope for c in node.children] == [(0,), (1, 2)]
    assert node.children[0].stats.var == 0.0
    node2 = split_uninformative(view.with_scope((0, 1)), cfg, 0, (), Decision(Op.SU, True, False, uninformative=(0,)))
    assert [c.kind for c in node2.children] == [LEAF, LEAF]


def test_split_variables_canonical_order():
    X = np.random.default_rng(2).uniform(0, 10, (20, 3))
    view = make_dataset(X).full_view()
    model = IndependenceModel((0, 1, 2), view.row_ids, np.zeros((3, 2, 1)), 1, 1 / 6, 0.3, np.eye(3), np.eye(3, dtype=bool), ((0, 2), (1,)))
    node = split_variables(view, LearnConfig(threshold=50), 0, (), Decision(Op.SV, independencies=True, independence=model))
    assert [c.scope for c in node.children] == [(0, 2), (1,)]
    assert all(c.state.num_data == 20 for c in node.children)


def test_learning_is_deterministic():
    ds = two_blobs(40, 3, seed=5)
    cfg = LearnConfig(threshold=8, master_seed=11)
    assert structural_equal(train(ds, cfg), train(ds, cfg)) == (True, "")


def test_analyzers_are_stored_where_needed():
    from certspn.verify import FAMILIES, VERIFY_CONFIG, generate

    for i, family in enumerate(FAMILIES):
        rng = np.random.default_rng(i)
        ds = generate(family, rng, 60, 4, VERIFY_CONFIG.threshold)
        spn = train(ds, VERIFY_CONFIG)
        assert validate(spn) == []
        for n in iter_nodes(spn.root):
            st = n.state
            if st.op == Op.SD:
                assert st.clustering is not None
            if st.op == Op.SV:
                assert st.variable_split is not None
            if st.op == Op.NF and st.clusters is False:
                assert st.decision_analyses is not None
            if st.op == Op.NF and st.num_data <= VERIFY_CONFIG.threshold:
                assert st.decision_analyses is None
            if n.kind != LEAF and st.num_data <= VERIFY_CONFIG.threshold and not st.exist_uninformative:
                assert st.op == Op.NF


def test_stripped_learner_builds_the_same_tree():
    ds = two_blobs(60, 4, seed=6)
    cfg = LearnConfig(threshold=10, master_seed=2)
    ok, diff = same_shape(train(ds, cfg).root, train_plain(ds, cfg))
    assert ok, diff


@given(
    st.integers(1, 30),
    st.integers(1, 4),
    st.integers(0, 2**32),
    st.sampled_from([0.0, 0.5]),
)
def test_decision_process_is_total(n, d, seed, round_to):
    rng = np.random.default_rng(seed)
    X = rng.uniform(0, 10, (n, d))
    if round_to:
        X = np.round(X / 5) * 5
    view = make_dataset(X).full_view()
    cfg = LearnConfig(threshold=int(rng.integers(1, 10)), rdc_features=3)
    d1 = decide_operation(view, cfg, seed)
    assert d1.op in set(Op)
    assert dataclasses.replace(d1, clustering=None, independence=None) == dataclasses.replace(
        decide_operation(view, cfg, seed), clustering=None, independence=None
    )
    assert validate(train(view.dataset, dataclasses.replace(cfg, master_seed=seed))) == []
