"""Seeded, state-recording LearnSPN without pruning.

Every node records the decision that created it (operation, data rows,
uninformativeness flags, analyzer outcomes) and the fitted analyzers, so the
decision can later be revised when a row is deleted. Node seeds depend only
on the master seed and the node's position in the tree.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from .dataset import Dataset, DataView, uninformative_variables
from .leaves import fit_stats
from .spn import LEAF, PRODUCT, SUM, Node, NodeState, Op, Spn
from .splitters import QUANTIZED, REPLAY, ClusteringModel, IndependenceModel, fit_clusters, fit_independence

INCREMENTAL = "incremental"
EXACT_REPLAY = "exact-replay"

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class LearnConfig:
    threshold: int = 50
    k: int = 2
    rdc_threshold: float = 0.3
    rdc_features: int = 20
    rdc_scale: float = 1.0 / 6.0
    cluster_strategy: str = QUANTIZED
    quant_step: float = 0.05
    lloyd_max_iter: int = 100
    alpha: float = 0.0
    removal_mode: str = INCREMENTAL
    master_seed: int = 0

    def __post_init__(self):
        if self.threshold < 1:
            raise ValueError("threshold must be >= 1")
        if self.k < 2:
            raise ValueError("k must be >= 2")
        if self.rdc_features < 1:
            raise ValueError("rdc_features must be >= 1")
        if self.cluster_strategy not in (QUANTIZED, REPLAY):
            raise ValueError(f"unknown cluster strategy {self.cluster_strategy!r}")
        if self.cluster_strategy == QUANTIZED and not 0 < self.quant_step <= 1:
            raise ValueError("quant_step must be in (0, 1]")
        if self.removal_mode not in (INCREMENTAL, EXACT_REPLAY):
            raise ValueError(f"unknown removal mode {self.removal_mode!r}")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if not 0 <= self.master_seed <= _MASK64:
            raise ValueError("master_seed must fit in 64 bits")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "LearnConfig":
        return cls(**d)


def derive_child_seed(parent_seed: int, child_index: int) -> int:
    digest = hashlib.blake2b(
        struct.pack("<QQ", parent_seed & _MASK64, child_index & _MASK64), digest_size=8, person=b"spn-node"
    ).digest()
    return int.from_bytes(digest, "little")


def root_seed(master_seed: int) -> int:
    return derive_child_seed(master_seed, 0)


@dataclass
class Decision:
    """Outcome of the operation decision process on one view."""

    op: Op
    exist_uninformative: bool = False
    all_uninformative: bool = False
    independencies: bool | None = None
    clusters: bool | None = None
    uninformative: tuple[int, ...] = field(default_factory=tuple)
    clustering: ClusteringModel | None = None
    independence: IndependenceModel | None = None


def fit_config_independence(view: DataView, config: LearnConfig, seed: int) -> IndependenceModel:
    return fit_independence(view, seed, config.rdc_threshold, config.rdc_features, config.rdc_scale)


def fit_config_clusters(view: DataView, config: LearnConfig, seed: int, record: bool = True) -> ClusteringModel:
    return fit_clusters(
        view, seed, config.k, config.cluster_strategy, config.quant_step, config.lloyd_max_iter, record=record
    )


def decide_operation(view: DataView, config: LearnConfig, node_seed: int, record: bool = True) -> Decision:
    if len(view) == 0:
        raise ValueError("cannot decide on an empty view")
    if len(view.scope) == 1:
        return Decision(Op.CL)
    unif = uninformative_variables(view)
    if unif:
        if len(unif) == len(view.scope):
            return Decision(Op.NF, True, True, uninformative=unif)
        return Decision(Op.SU, True, False, uninformative=unif)
    if len(view) <= config.threshold:
        return Decision(Op.NF)
    # independence first: when it holds the outcome is SV whatever the clustering says
    ind = fit_config_independence(view, config, node_seed)
    if ind.independencies_exist:
        return Decision(Op.SV, independencies=True, independence=ind)
    cl = fit_config_clusters(view, config, node_seed, record)
    if not cl.clusters_exist:
        return Decision(Op.NF, independencies=False, clusters=False, clustering=cl, independence=ind)
    return Decision(Op.SD, independencies=False, clusters=True, clustering=cl, independence=ind)


def node_state(view: DataView, seed: int, path: tuple[int, ...], decision: Decision) -> NodeState:
    analyses = None
    if decision.op == Op.NF and decision.clustering is not None:
        analyses = (decision.clustering, decision.independence)
    return NodeState(
        scope=view.scope,
        op=decision.op,
        data=view.row_ids.copy(),
        num_data=len(view),
        exist_uninformative=decision.exist_uninformative,
        all_uninformative=decision.all_uninformative,
        independencies=decision.independencies,
        clusters=decision.clusters,
        seed=seed,
        path=path,
        clustering=decision.clustering if decision.op == Op.SD else None,
        variable_split=decision.independence if decision.op == Op.SV else None,
        decision_analyses=analyses,
    )


def create_leaf(view: DataView, config: LearnConfig, seed: int, path: tuple[int, ...], var: int | None = None) -> Node:
    """Leaf over one variable; statistics accumulate in ascending row order."""
    if len(view) == 0:
        raise ValueError("cannot create a leaf on an empty view")
    if var is None:
        (var,) = view.scope
    view = view.with_scope((var,))
    stats = fit_stats(view.column(var), view.schema[var], config.alpha)
    return Node(LEAF, node_state(view, seed, path, Decision(Op.CL)), stats=stats)


def _leaf_children(view, config, seed, path, variables) -> list[Node]:
    return [
        create_leaf(view, config, derive_child_seed(seed, i), path + (i,), var=v) for i, v in enumerate(variables)
    ]


def naive_factorization(view: DataView, config: LearnConfig, seed: int, path: tuple[int, ...], decision: Decision) -> Node:
    node = Node(PRODUCT, node_state(view, seed, path, decision))
    node.children = _leaf_children(view, config, seed, path, view.scope)
    return node


def split_uninformative(view: DataView, config: LearnConfig, seed: int, path: tuple[int, ...], decision: Decision) -> Node:
    """Leaves for the constant variables, then one learned child over the rest (last)."""
    node = Node(PRODUCT, node_state(view, seed, path, decision))
    constant = sorted(decision.uninformative)
    informative = [v for v in view.scope if v not in constant]
    node.children = _leaf_children(view, config, seed, path, constant)
    i = len(constant)
    node.children.append(learn_spn(view.with_scope(informative), config, derive_child_seed(seed, i), path + (i,)))
    return node


def split_data(view: DataView, config: LearnConfig, seed: int, path: tuple[int, ...], decision: Decision) -> Node:
    node = Node(SUM, node_state(view, seed, path, decision))
    for i, rows in enumerate(decision.clustering.partition()):
        node.children.append(learn_spn(view.with_rows(rows), config, derive_child_seed(seed, i), path + (i,)))
        node.child_counts.append(int(rows.size))
    return node


def split_variables(view: DataView, config: LearnConfig, seed: int, path: tuple[int, ...], decision: Decision) -> Node:
    node = Node(PRODUCT, node_state(view, seed, path, decision))
    for i, comp in enumerate(decision.independence.components):
        node.children.append(learn_spn(view.with_scope(comp), config, derive_child_seed(seed, i), path + (i,)))
    return node


_BUILDERS = {
    Op.NF: naive_factorization,
    Op.SU: split_uninformative,
    Op.SD: split_data,
    Op.SV: split_variables,
}


def learn_spn(
    view: DataView, config: LearnConfig, seed: int, path: tuple[int, ...] = (), decision: Decision | None = None
) -> Node:
    if decision is None:
        decision = decide_operation(view, config, seed)
    if decision.op == Op.CL:
        return create_leaf(view, config, seed, path)
    return _BUILDERS[decision.op](view, config, seed, path, decision)


def train(dataset: Dataset, config: LearnConfig) -> Spn:
    """Learn a removal-enabled SPN over all live rows of ``dataset``."""
    view = dataset.full_view()
    if len(view) == 0:
        raise ValueError("no rows to learn from")
    root = learn_spn(view, config, root_seed(config.master_seed), ())
    return Spn(root, dataset, config)


# -- stripped learner: same decisions, no state, plain float leaves ----------


@dataclass
class PlainNode:
    kind: str
    scope: tuple[int, ...]
    children: list["PlainNode"] = field(default_factory=list)
    counts: list[int] = field(default_factory=list)
    params: tuple = ()


def learn_plain(view: DataView, config: LearnConfig, seed: int) -> PlainNode:
    """LearnSPN as it runs without removal support: nothing beyond the model is kept."""
    d = decide_operation(view, config, seed, record=False)
    if d.op == Op.CL:
        (v,) = view.scope
        col = view.column(v)
        if view.schema[v].is_categorical:
            params = tuple(np.bincount(col.astype(np.int64), minlength=len(view.schema[v].categories)).tolist())
        else:
            params = (float(col.mean()), float(col.var()))
        return PlainNode(LEAF, view.scope, params=params)
    if d.op == Op.NF:
        kids = [learn_plain(view.with_scope((v,)), config, derive_child_seed(seed, i)) for i, v in enumerate(view.scope)]
        return PlainNode(PRODUCT, view.scope, kids)
    if d.op == Op.SU:
        constant = sorted(d.uninformative)
        kids = [learn_plain(view.with_scope((v,)), config, derive_child_seed(seed, i)) for i, v in enumerate(constant)]
        rest = [v for v in view.scope if v not in constant]
        kids.append(learn_plain(view.with_scope(rest), config, derive_child_seed(seed, len(constant))))
        return PlainNode(PRODUCT, view.scope, kids)
    if d.op == Op.SD:
        parts = d.clustering.partition()
        kids = [learn_plain(view.with_rows(r), config, derive_child_seed(seed, i)) for i, r in enumerate(parts)]
        return PlainNode(SUM, view.scope, kids, [int(r.size) for r in parts])
    kids = [
        learn_plain(view.with_scope(c), config, derive_child_seed(seed, i)) for i, c in enumerate(d.independence.components)
    ]
    return PlainNode(PRODUCT, view.scope, kids)


def train_plain(dataset: Dataset, config: LearnConfig) -> PlainNode:
    return learn_plain(dataset.full_view(), config, root_seed(config.master_seed))


def same_shape(node: Node, plain: PlainNode, tol: float = 1e-9) -> tuple[bool, str]:
    """Compare a stateful tree with a stripped one, ignoring everything but the model."""
    where = "/" + "/".join(map(str, node.state.path))
    if node.kind != plain.kind or node.scope != plain.scope:
        return False, f"{where}: {node.kind}{node.scope} vs {plain.kind}{plain.scope}"
    if node.kind == SUM and node.child_counts != plain.counts:
        return False, f"{where}: counts {node.child_counts} vs {plain.counts}"
    if len(node.children) != len(plain.children):
        return False, f"{where}: child count differs"
    if node.kind == LEAF:
        if hasattr(node.stats, "counts"):
            ok = tuple(node.stats.counts) == plain.params
        else:
            ok = all(abs(a - b) <= tol * max(1.0, abs(a), abs(b)) for a, b in zip(node.stats.params(), plain.params))
        if not ok:
            return False, f"{where}: leaf parameters differ"
    for c, p in zip(node.children, plain.children):
        ok, msg = same_shape(c, p, tol)
        if not ok:
            return ok, msg
    return True, ""
