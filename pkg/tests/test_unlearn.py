import copy
import dataclasses
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from certspn import io
from certspn.dataset import Dataset, Schema, categorical
from certspn.learn import EXACT_REPLAY, INCREMENTAL, LearnConfig, train
from certspn.spn import Op, iter_nodes, structural_equal, validate
from certspn.unlearn import SKIPPED, UnlearnError, revise, unlearn_batch, unlearn_spn
from certspn.verify import FAMILIES, VERIFY_CONFIG, generate, retrain_oracle
from conftest import make_dataset, two_blobs


def survivors_of(spn, node, row):
    st_ = node.state
    return spn.dataset.view(st_.data[st_.data != row], st_.scope)


def test_revise_leaf_is_always_leaf():
    spn = train(make_dataset(np.arange(5.0)[:, None]), LearnConfig())
    assert revise(spn.root, 2, survivors_of(spn, spn.root, 2), spn.config)[0] == Op.CL


def test_su_whose_last_informative_column_turns_constant_becomes_nf():
    X = np.c_[np.full(6, 1.0), np.r_[np.full(5, 3.0), 4.0]]
    spn = train(make_dataset(X), LearnConfig(threshold=2))
    assert spn.root.op == Op.SU
    assert revise(spn.root, 5, survivors_of(spn, spn.root, 5), spn.config)[0] == Op.NF
    out = unlearn_spn(spn, 5)
    assert out.spn.root.op == Op.NF and out.spn.root.state.all_uninformative
    assert structural_equal(out.spn, retrain_oracle(make_dataset(X), {5}, spn.config))[0]


def test_sd_at_threshold_plus_one_becomes_nf():
    ds = two_blobs(5, 2, seed=1)
    cfg = LearnConfig(threshold=9, master_seed=1)
    spn = train(ds, cfg)
    assert spn.root.op == Op.SD and spn.root.state.num_data == cfg.threshold + 1
    assert revise(spn.root, 0, survivors_of(spn, spn.root, 0), cfg)[0] == Op.NF
    unlearn_spn(spn, 0)
    assert spn.root.op == Op.NF
    assert structural_equal(spn, retrain_oracle(ds, {0}, cfg))[0]


def test_rows_outside_a_subtree_leave_it_alone():
    ds = two_blobs(30, 2, seed=2)
    spn = train(ds, LearnConfig(threshold=10, master_seed=2))
    assert spn.root.op == Op.SD
    before = copy.deepcopy(spn.root)
    row = int(spn.root.children[0].state.data[0])
    out = unlearn_spn(spn, row)
    assert (spn.root.children[1].state.path, SKIPPED) not in out.log  # not even visited
    assert io.canonical(io.node_to_dict(spn.root.children[1])) == io.canonical(io.node_to_dict(before.children[1]))


def test_sum_counts_update_exactly():
    rng = np.random.default_rng(0)
    x = np.r_[rng.normal(2, 0.2, 600), rng.normal(8, 0.2, 400)]
    ds = make_dataset(np.clip(np.c_[x, x + rng.normal(0, 0.05, 1000)], 0, 10))
    spn = train(ds, LearnConfig(master_seed=1))
    assert spn.root.op == Op.SD and sorted(spn.root.child_counts) == [400, 600]
    big = int(np.argmax(spn.root.child_counts))
    row = int(spn.root.children[big].state.data[3])
    unlearn_spn(spn, row)
    counts = spn.root.child_counts
    assert counts[big] == 599 and sum(counts) == 999
    assert spn.root.weights()[big] == Fraction(599, 999)


def test_naive_factorization_of_constants():
    spn = train(make_dataset(np.full((5, 2), 4.0)), LearnConfig())
    out = unlearn_spn(spn, 1)
    root = out.spn.root
    assert (root.op, root.state.exist_uninformative, root.state.all_uninformative) == (Op.NF, True, True)
    assert all(c.state.num_data == 4 for c in root.children)


def test_naive_factorization_turning_constant_sets_flags():
    X = np.c_[np.r_[np.full(4, 1.0), 2.0], np.r_[np.full(4, 3.0), 5.0]]
    spn = train(make_dataset(X), LearnConfig(threshold=50))
    assert spn.root.op == Op.NF and not spn.root.state.exist_uninformative
    unlearn_spn(spn, 4)
    assert spn.root.state.exist_uninformative and spn.root.state.all_uninformative


def test_leaf_updates():
    spn = train(make_dataset(np.array([[1.0], [2.0], [3.0]])), LearnConfig())
    unlearn_spn(spn, 2)
    assert spn.root.stats.mean == 1.5 and spn.root.state.data.tolist() == [0, 1]
    schema = Schema((categorical("c", ["a", "b"]),))
    spn = train(Dataset.from_array(schema, np.array([[0.0], [1.0], [0.0], [0.0]])), LearnConfig())
    unlearn_spn(spn, 0)
    assert spn.root.stats.counts == [2, 1]


def test_new_constant_inside_su_child_adds_a_leaf():
    rng = np.random.default_rng(3)
    n = 12
    X = np.c_[np.full(n, 1.0), np.r_[np.full(n - 1, 2.0), 7.0], rng.uniform(0, 10, n), rng.uniform(0, 10, n)]
    ds = make_dataset(X)
    cfg = LearnConfig(threshold=50)
    spn = train(ds, cfg)
    assert spn.root.op == Op.SU and len(spn.root.children) == 2
    out = unlearn_spn(spn, n - 1)
    assert [c.scope for c in spn.root.children] == [(0,), (1,), (2, 3)]
    assert (spn.root.state.path, "new-leaves-added") in out.log
    assert structural_equal(spn, retrain_oracle(ds, {n - 1}, cfg))[0]


def test_errors():
    ds = two_blobs(5, 2)
    spn = train(ds, LearnConfig())
    with pytest.raises(UnlearnError, match="never existed"):
        unlearn_spn(spn, 99)
    unlearn_spn(spn, 3)
    with pytest.raises(UnlearnError, match="already removed"):
        unlearn_spn(spn, 3)
    one = train(make_dataset(np.array([[1.0, 2.0]])), LearnConfig())
    with pytest.raises(UnlearnError, match="dataset exhausted"):
        unlearn_spn(one, 0)


def test_batch_semantics():
    ds = two_blobs(20, 3, seed=7)
    cfg = dataclasses.replace(VERIFY_CONFIG, master_seed=7)
    a, b = train(ds, cfg), train(ds, cfg)
    unlearn_batch(a, {4})
    unlearn_spn(b, 4)
    assert structural_equal(a, b)[0]
    unlearn_batch(a, {30, 9})
    assert structural_equal(a, retrain_oracle(ds, {4, 9, 30}, cfg))[0]
    snapshot = io.dumps(a)
    assert unlearn_batch(a, set()).log == []
    assert io.dumps(a) == snapshot
    with pytest.raises(UnlearnError):
        unlearn_batch(a, {1, 4})  # 4 is gone
    assert io.dumps(a) == snapshot  # nothing was removed


def test_log_names_exactly_the_nodes_holding_the_row():
    ds = generate("blobs", np.random.default_rng(5), 120, 4)
    cfg = dataclasses.replace(VERIFY_CONFIG, master_seed=5)
    spn = train(ds, cfg)
    before = {n.state.path: n for n in iter_nodes(copy.deepcopy(spn.root))}
    row = 17
    out = unlearn_spn(spn, row)
    for path, action in out.log:
        assert path in before
        assert (action != SKIPPED) == before[path].state.contains(row)
    # num_data drops by one along the row's path wherever the node kept its op
    for n in iter_nodes(spn.root):
        assert not n.state.contains(row)
        old = before.get(n.state.path)
        if old is not None and old.state.contains(row) and old.state.op == n.state.op and old.state.scope == n.state.scope:
            assert n.state.num_data == old.state.num_data - 1


@pytest.mark.parametrize("mode", [EXACT_REPLAY, INCREMENTAL])
@given(st.integers(0, 2**32), st.sampled_from(FAMILIES), st.integers(8, 60), st.integers(1, 5))
def test_removal_equals_retraining(mode, seed, family, n, d):
    rng = np.random.default_rng(seed)
    ds = generate(family, rng, n, d, VERIFY_CONFIG.threshold)
    cfg = dataclasses.replace(VERIFY_CONFIG, master_seed=seed, removal_mode=mode)
    spn = train(ds, cfg)
    row = int(rng.integers(ds.n_rows))
    unlearn_spn(spn, row)
    assert validate(spn) == []
    ok, diff = structural_equal(spn, retrain_oracle(ds, {row}, cfg), 0.0 if mode == EXACT_REPLAY else 1e-9)
    assert ok, diff


def test_sequential_removals_keep_matching():
    ds = generate("categorical", np.random.default_rng(8), 80, 5)
    cfg = dataclasses.replace(VERIFY_CONFIG, master_seed=8)
    spn = train(ds, cfg)
    removed = set()
    for row in np.random.default_rng(9).permutation(80)[:40]:
        unlearn_spn(spn, int(row))
        removed.add(int(row))
        ok, diff = structural_equal(spn, retrain_oracle(ds, removed, cfg))
        assert ok, diff
