"""Removing one training row from a learned SPN without retraining it wholesale.

For every node whose data contains the row, the revision function predicts
which operation the learner would choose on the survivors. If the operation
changes, that subtree is rebuilt on the survivors with the node's own seed
and path. Otherwise a per-operation update runs and recurses where needed.
The result equals a full retrain on the survivors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

from .dataset import DataView, uninformative_variables
from .leaves import fit_stats
from .learn import (
    EXACT_REPLAY,
    Decision,
    LearnConfig,
    create_leaf,
    derive_child_seed,
    fit_config_clusters,
    fit_config_independence,
    learn_spn,
    naive_factorization,
    split_data,
    split_variables,
)
from .spn import Node, Op, Spn, fmt_path
from .splitters import remove_from_clusters, remove_from_independence

SKIPPED = "skipped: x-absent"
STATE_UPDATED = "state-updated"
LEAF_UPDATED = "leaf-updated"
WEIGHTS_UPDATED = "weights-updated"
NAIVE_FACTORIZED = "naive-factorized"
NEW_LEAVES_ADDED = "new-leaves-added"


def retrained(op: Op) -> str:
    return f"retrained-subtree({op.value})"


class UnlearnError(ValueError):
    pass


# operation changes that rebuild the subtree through the learner
_RETRAIN = {
    (Op.SD, Op.SV),
    (Op.SV, Op.SD),
    (Op.SD, Op.SU),
    (Op.SV, Op.SU),
    (Op.NF, Op.SD),
    (Op.NF, Op.SV),
    (Op.NF, Op.SU),
}


@dataclass
class RemovalOutcome:
    spn: Spn
    log: list[tuple[tuple[int, ...], str]] = field(default_factory=list)

    def format_log(self) -> str:
        return "\n".join(f"{fmt_path(p)}\t{a}" for p, a in self.log)


class SurvivorFacts:
    """Predicates over a node's data with the row removed, each computed once and on demand.

    Analyzer outcomes reuse the node's stored models when it has them and are
    fitted with the node seed otherwise, exactly as the learner would.
    """

    def __init__(self, node: Node, row_id: int, survivors: DataView, config: LearnConfig):
        self.node = node
        self.row_id = row_id
        self.view = survivors
        self.config = config
        self.evaluated_independence = False
        self.evaluated_clusters = False

    @cached_property
    def uninformative(self) -> tuple[int, ...]:
        return uninformative_variables(self.view)

    @property
    def exist_uninformative(self) -> bool:
        return bool(self.uninformative)

    @property
    def all_uninformative(self) -> bool:
        return len(self.uninformative) == len(self.view.scope)

    @property
    def small(self) -> bool:
        return len(self.view) <= self.config.threshold

    @cached_property
    def independence(self):
        """(unchanged or None, model on the survivors)."""
        st = self.node.state
        self.evaluated_independence = True
        stored = st.variable_split
        if stored is None and st.decision_analyses is not None:
            stored = st.decision_analyses[1]
        if stored is not None:
            return remove_from_independence(stored, self.row_id, self.view)
        return None, fit_config_independence(self.view, self.config, st.seed)

    @cached_property
    def clustering(self):
        st = self.node.state
        self.evaluated_clusters = True
        stored = st.clustering
        if stored is None and st.decision_analyses is not None:
            stored = st.decision_analyses[0]
        if stored is not None:
            return remove_from_clusters(stored, self.row_id, self.view)
        return None, fit_config_clusters(self.view, self.config, st.seed)

    @property
    def independencies(self) -> bool:
        return self.independence[1].independencies_exist

    @property
    def clusters(self) -> bool:
        return self.clustering[1].clusters_exist

    def decision(self, op: Op) -> Decision:
        """The decision the learner records for ``op`` on the survivors."""
        if op == Op.CL:
            return Decision(Op.CL)
        d = Decision(
            op,
            exist_uninformative=self.exist_uninformative,
            all_uninformative=self.all_uninformative,
            uninformative=self.uninformative,
        )
        if self.evaluated_independence:
            d.independencies = self.independencies
            d.independence = self.independence[1]
        if self.evaluated_clusters:
            d.clusters = self.clusters
            d.clustering = self.clustering[1]
        return d


def _revise_nf(node: Node, f: SurvivorFacts) -> Op:
    st = node.state
    if st.all_uninformative or f.all_uninformative:
        return Op.NF
    if f.exist_uninformative and not st.exist_uninformative:
        return Op.SU
    # |X'| rather than |X|: a node with |X| = t+1 got NF from the flags and must stay NF
    if f.small:
        return Op.NF
    # independence first, matching the learner's evaluation order
    if not f.independencies and not f.clusters:
        return Op.NF
    if not f.independencies:
        return Op.SD
    return Op.SV


def _revise_split(node: Node, f: SurvivorFacts) -> Op:
    if f.exist_uninformative and not f.all_uninformative:
        return Op.SU
    if f.all_uninformative:
        return Op.NF
    if f.small:
        return Op.NF
    if f.independencies:
        return Op.SV
    if not f.clusters:
        return Op.NF
    return Op.SD


def _revise_su(node: Node, f: SurvivorFacts) -> Op:
    return Op.NF if f.all_uninformative else Op.SU


def revise(node: Node, row_id: int, survivors: DataView, config: LearnConfig) -> tuple[Op, SurvivorFacts]:
    """Operation the learner would choose at this node without ``row_id``.

    ``survivors`` is the node's data minus the row; the dataset must still
    hold the row's values.
    """
    f = SurvivorFacts(node, row_id, survivors, config)
    op = node.state.op
    if op == Op.CL:
        return Op.CL, f
    if op == Op.NF:
        return _revise_nf(node, f), f
    if op == Op.SU:
        return _revise_su(node, f), f
    # SD and SV nodes share their cases up to how SD and SV are told apart
    return _revise_split(node, f), f


def _survivor_view(node: Node, row_id: int, dataset) -> DataView:
    st = node.state
    return DataView(dataset, st.data[st.data != row_id], st.scope)


def _unlearn(node: Node, row_id: int, dataset, config: LearnConfig, log) -> Node:
    st = node.state
    if not st.contains(row_id):
        log.append((st.path, SKIPPED))
        return node
    if st.op == Op.CL:
        _unlearn_leaf(node, row_id, dataset, config, log)
        return node
    survivors = _survivor_view(node, row_id, dataset)
    new_op, facts = revise(node, row_id, survivors, config)
    old_op = st.op
    if (old_op, new_op) in _RETRAIN:
        log.append((st.path, retrained(new_op)))
        return learn_spn(survivors, config, st.seed, st.path, facts.decision(new_op))
    if old_op != new_op:
        log.append((st.path, NAIVE_FACTORIZED))
        return naive_factorization(survivors, config, st.seed, st.path, facts.decision(new_op))
    if old_op == Op.NF:
        return _unlearn_naive_factorization(node, row_id, dataset, config, log, facts)
    if old_op == Op.SU:
        return _unlearn_split_uninformative(node, row_id, dataset, config, log, facts)
    if old_op == Op.SD:
        return _unlearn_split_data(node, row_id, dataset, config, log, facts)
    return _unlearn_split_variables(node, row_id, dataset, config, log, facts)


def _unlearn_leaf(node: Node, row_id: int, dataset, config: LearnConfig, log) -> None:
    st = node.state
    st.drop_row(row_id)
    (var,) = st.scope
    if config.removal_mode == EXACT_REPLAY:
        node.stats = fit_stats(dataset.values[st.data, var], dataset.schema[var], config.alpha)
    else:
        node.stats.remove(dataset.values[row_id, var])
    log.append((st.path, LEAF_UPDATED))


def _install(node: Node, decision: Decision) -> None:
    """Copy the survivors' flags and analyzers into an unchanged-operation node."""
    st = node.state
    st.exist_uninformative = decision.exist_uninformative
    st.all_uninformative = decision.all_uninformative
    st.independencies = decision.independencies
    st.clusters = decision.clusters
    if st.op == Op.NF:
        st.decision_analyses = (decision.clustering, decision.independence) if decision.clustering else None
    elif st.op == Op.SD:
        st.clustering = decision.clustering
    elif st.op == Op.SV:
        st.variable_split = decision.independence


def _unlearn_naive_factorization(node, row_id, dataset, config, log, facts: SurvivorFacts) -> Node:
    st = node.state
    was_constant = st.all_uninformative
    st.drop_row(row_id)
    log.append((st.path, STATE_UPDATED))
    for child in node.children:
        _unlearn_leaf(child, row_id, dataset, config, log)
    if was_constant:
        return node  # constants stay constant; the analyses were never run
    _install(node, facts.decision(Op.NF))
    return node


def _unlearn_split_uninformative(node, row_id, dataset, config, log, facts: SurvivorFacts) -> Node:
    st = node.state
    survivors = facts.view
    st.drop_row(row_id)
    log.append((st.path, STATE_UPDATED))
    leaves, rest = node.children[:-1], node.children[-1]
    for leaf in leaves:
        _unlearn_leaf(leaf, row_id, dataset, config, log)
    fresh = [v for v in rest.scope if v in facts.uninformative]
    if not fresh:
        node.children[-1] = _unlearn(rest, row_id, dataset, config, log)
        _install(node, facts.decision(Op.SU))
        return node
    # the learner orders leaves by variable, so children are renumbered
    log.append((st.path, NEW_LEAVES_ADDED))
    for v in fresh:
        leaves.append(create_leaf(survivors, config, 0, (), var=v))
    leaves.sort(key=lambda n: n.scope[0])
    for i, leaf in enumerate(leaves):
        leaf.state.seed = derive_child_seed(st.seed, i)
        leaf.state.path = st.path + (i,)
    i = len(leaves)
    informative = [v for v in rest.scope if v not in fresh]
    rest = learn_spn(survivors.with_scope(informative), config, derive_child_seed(st.seed, i), st.path + (i,))
    node.children = leaves + [rest]
    _install(node, facts.decision(Op.SU))
    return node


def _unlearn_split_data(node, row_id, dataset, config, log, facts: SurvivorFacts) -> Node:
    st = node.state
    unchanged, model = facts.clustering
    if not unchanged:
        log.append((st.path, retrained(Op.SD)))
        return split_data(facts.view, config, st.seed, st.path, facts.decision(Op.SD))
    j = next(i for i, c in enumerate(node.children) if c.state.contains(row_id))
    st.drop_row(row_id)
    node.child_counts[j] -= 1
    log.append((st.path, WEIGHTS_UPDATED))
    _install(node, facts.decision(Op.SD))
    node.children[j] = _unlearn(node.children[j], row_id, dataset, config, log)
    return node


def _unlearn_split_variables(node, row_id, dataset, config, log, facts: SurvivorFacts) -> Node:
    st = node.state
    unchanged, model = facts.independence
    if not unchanged:
        log.append((st.path, retrained(Op.SV)))
        return split_variables(facts.view, config, st.seed, st.path, facts.decision(Op.SV))
    st.drop_row(row_id)
    log.append((st.path, STATE_UPDATED))
    _install(node, facts.decision(Op.SV))
    for i, child in enumerate(node.children):
        node.children[i] = _unlearn(child, row_id, dataset, config, log)
    return node


def _check_present(spn: Spn, row_id: int) -> None:
    if not 0 <= row_id < spn.dataset.values.shape[0]:
        raise UnlearnError(f"row {row_id} never existed in the dataset")
    if not spn.dataset.has_row(row_id):
        raise UnlearnError(f"row {row_id} was already removed")


def unlearn_spn(spn: Spn, row_id: int) -> RemovalOutcome:
    """Remove ``row_id`` in place; the returned outcome holds the same Spn."""
    row_id = int(row_id)
    _check_present(spn, row_id)
    if spn.root.state.num_data <= 1:
        raise UnlearnError("dataset exhausted")
    log: list = []
    spn.root = _unlearn(spn.root, row_id, spn.dataset, spn.config, log)
    spn.dataset = spn.dataset.without(row_id)
    return RemovalOutcome(spn, log)


def unlearn_batch(spn: Spn, row_ids) -> RemovalOutcome:
    """Remove a set of rows, one at a time in ascending id order."""
    rows = sorted({int(r) for r in row_ids})
    for r in rows:
        _check_present(spn, r)
    if rows and len(rows) >= spn.root.state.num_data:
        raise UnlearnError("dataset exhausted")
    outcome = RemovalOutcome(spn)
    for r in rows:
        outcome.log.extend(unlearn_spn(spn, r).log)
    return outcome
