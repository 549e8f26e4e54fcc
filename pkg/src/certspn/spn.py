"""SPN tree: nodes with per-node learning state, validation, inference, comparison."""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator

import numpy as np
from scipy.special import logsumexp

from .dataset import Dataset
from .leaves import CategoricalStats, GaussianStats, LeafStats
from .splitters import ClusteringModel, IndependenceModel


class Op(str, enum.Enum):
    CL = "CL"  # create leaf
    NF = "NF"  # naive factorization
    SU = "SU"  # split uninformative variables
    SD = "SD"  # split data
    SV = "SV"  # split variables


SUM, PRODUCT, LEAF = "sum", "product", "leaf"

KIND_OF_OP = {Op.CL: LEAF, Op.NF: PRODUCT, Op.SU: PRODUCT, Op.SD: SUM, Op.SV: PRODUCT}


@dataclass
class NodeState:
    scope: tuple[int, ...]
    op: Op
    data: np.ndarray  # ascending row ids
    num_data: int
    exist_uninformative: bool
    all_uninformative: bool
    independencies: bool | None  # None: not evaluated
    clusters: bool | None
    seed: int
    path: tuple[int, ...]
    clustering: ClusteringModel | None = None
    variable_split: IndependenceModel | None = None
    decision_analyses: tuple[ClusteringModel, IndependenceModel] | None = None

    def contains(self, row_id: int) -> bool:
        i = np.searchsorted(self.data, row_id)
        return bool(i < self.data.size and self.data[i] == row_id)

    def drop_row(self, row_id: int) -> None:
        i = int(np.searchsorted(self.data, row_id))
        self.data = np.delete(self.data, i)
        self.num_data -= 1


@dataclass
class Node:
    kind: str
    state: NodeState
    children: list["Node"] = field(default_factory=list)
    child_counts: list[int] = field(default_factory=list)
    stats: LeafStats | None = None

    @property
    def scope(self) -> tuple[int, ...]:
        return self.state.scope

    @property
    def op(self) -> Op:
        return self.state.op

    def weights(self) -> list[Fraction]:
        n = self.state.num_data
        return [Fraction(c, n) for c in self.child_counts]


@dataclass
class Spn:
    root: Node
    dataset: Dataset
    config: "object"  # learn.LearnConfig; kept loose to avoid an import cycle

    @property
    def master_seed(self) -> int:
        return self.config.master_seed


def iter_nodes(node: Node) -> Iterator[Node]:
    stack = [node]
    while stack:
        n = stack.pop()
        yield n
        stack.extend(reversed(n.children))


def op_counts(spn: Spn) -> Counter:
    return Counter(n.op.value for n in iter_nodes(spn.root))


def fmt_path(path: tuple[int, ...]) -> str:
    return "/" + "/".join(str(i) for i in path)


def validate(spn: Spn) -> list[str]:
    """Every violated structural or state invariant, one message per problem."""
    problems: list[str] = []
    full_scope = tuple(range(len(spn.dataset.schema)))
    if spn.root.scope != full_scope:
        problems.append(f"{fmt_path(spn.root.state.path)}: root scope {spn.root.scope} != {full_scope}")
    live = spn.dataset.row_ids
    if not np.all(np.isin(spn.root.state.data, live)):
        problems.append("/: root data references removed or unknown rows")
    _validate_node(spn.root, problems)
    return problems


def _validate_node(node: Node, problems: list[str]) -> None:
    st = node.state
    where = fmt_path(st.path)
    if st.num_data != st.data.size:
        problems.append(f"{where}: num_data {st.num_data} != |data| {st.data.size}")
    if st.data.size > 1 and not np.all(st.data[1:] > st.data[:-1]):
        problems.append(f"{where}: data row ids not strictly ascending")
    if st.all_uninformative and not st.exist_uninformative:
        problems.append(f"{where}: all_uninformative without exist_uninformative")
    if KIND_OF_OP[st.op] != node.kind:
        problems.append(f"{where}: op {st.op.value} on a {node.kind} node")
    if st.op == Op.SD and st.clustering is None:
        problems.append(f"{where}: SD node without clustering")
    if st.op == Op.SV and st.variable_split is None:
        problems.append(f"{where}: SV node without variable split")

    if node.kind == LEAF:
        if node.children:
            problems.append(f"{where}: leaf with children")
        if len(st.scope) != 1:
            problems.append(f"{where}: leaf scope {st.scope} is not a single variable")
        if node.stats is None or node.stats.n != st.num_data:
            problems.append(f"{where}: leaf statistics do not cover {st.num_data} rows")
        return

    if not node.children:
        problems.append(f"{where}: inner node without children")
        return
    if node.kind == SUM:
        if len(node.child_counts) != len(node.children):
            problems.append(f"{where}: {len(node.child_counts)} counts for {len(node.children)} children")
        elif sum(node.child_counts) != st.num_data:
            problems.append(f"{where}: child counts sum to {sum(node.child_counts)}, num_data is {st.num_data}")
        elif sum(node.weights(), Fraction(0)) != 1:
            problems.append(f"{where}: weights do not sum to 1")
        for i, child in enumerate(node.children):
            if child.scope != st.scope:
                problems.append(f"{where}: child {i} scope {child.scope} breaks completeness")
            if i < len(node.child_counts) and node.child_counts[i] != child.state.num_data:
                problems.append(f"{where}: count {node.child_counts[i]} != child {i} num_data")
        union = np.concatenate([c.state.data for c in node.children])
        if union.size != np.unique(union).size:
            problems.append(f"{where}: children of a sum node share rows")
        if not np.array_equal(np.sort(union), st.data):
            problems.append(f"{where}: children rows do not union to the node's rows")
    else:
        seen: set[int] = set()
        for i, child in enumerate(node.children):
            if seen & set(child.scope):
                problems.append(f"{where}: child {i} scope overlaps a sibling (decomposability)")
            seen |= set(child.scope)
            if not np.array_equal(child.state.data, st.data):
                problems.append(f"{where}: child {i} rows differ from the product node's rows")
        if tuple(sorted(seen)) != st.scope:
            problems.append(f"{where}: children scopes union to {sorted(seen)}, node scope is {st.scope}")
    for child in node.children:
        _validate_node(child, problems)


def log_likelihood(spn: Spn, values) -> np.ndarray | float:
    """Natural-log density/mass of one assignment (1-D) or each row of a matrix."""
    x = np.asarray(values, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    out = _log_likelihood(spn.root, X)
    return float(out[0]) if single else out


def _log_likelihood(node: Node, X: np.ndarray) -> np.ndarray:
    if node.kind == LEAF:
        return node.stats.log_density(X[:, node.scope[0]])
    parts = np.stack([_log_likelihood(c, X) for c in node.children])
    if node.kind == PRODUCT:
        return parts.sum(axis=0)
    logw = np.log(np.asarray(node.child_counts, dtype=np.float64)) - np.log(node.state.num_data)
    return logsumexp(parts + logw[:, None], axis=0)


def _close(a: float, b: float, tol: float) -> bool:
    if a == b:
        return True
    return abs(a - b) <= tol * max(abs(a), abs(b))


def structural_equal(a: Spn | Node, b: Spn | Node, tol: float = 0.0) -> tuple[bool, str]:
    """Recursive comparison; returns (equal, description of the first difference).

    Everything is compared exactly except gaussian leaf parameters, which
    are allowed a relative difference of ``tol``.
    """
    ra = a.root if isinstance(a, Spn) else a
    rb = b.root if isinstance(b, Spn) else b
    diff = _compare(ra, rb, tol)
    return diff is None, diff or ""


def _compare(a: Node, b: Node, tol: float) -> str | None:
    sa, sb = a.state, b.state
    where = fmt_path(sa.path)
    if a.kind != b.kind:
        return f"{where}: kind {a.kind} != {b.kind}"
    for name in (
        "scope",
        "op",
        "num_data",
        "path",
        "seed",
        "exist_uninformative",
        "all_uninformative",
        "independencies",
        "clusters",
    ):
        va, vb = getattr(sa, name), getattr(sb, name)
        if va != vb:
            return f"{where}: {name} {va!r} != {vb!r}"
    if not np.array_equal(sa.data, sb.data):
        return f"{where}: data rows differ"
    msg = _compare_clustering(sa.clustering, sb.clustering)
    if msg:
        return f"{where}: clustering {msg}"
    msg = _compare_split(sa.variable_split, sb.variable_split)
    if msg:
        return f"{where}: variable split {msg}"
    if (sa.decision_analyses is None) != (sb.decision_analyses is None):
        return f"{where}: decision analyses present in only one tree"
    if sa.decision_analyses is not None:
        msg = _compare_clustering(sa.decision_analyses[0], sb.decision_analyses[0]) or _compare_split(
            sa.decision_analyses[1], sb.decision_analyses[1]
        )
        if msg:
            return f"{where}: decision analyses {msg}"
    if a.child_counts != b.child_counts:
        return f"{where}: child counts {a.child_counts} != {b.child_counts}"
    if len(a.children) != len(b.children):
        return f"{where}: {len(a.children)} children != {len(b.children)}"
    if a.kind == LEAF:
        msg = _compare_stats(a.stats, b.stats, tol)
        if msg:
            return f"{where}: leaf {msg}"
    for ca, cb in zip(a.children, b.children):
        msg = _compare(ca, cb, tol)
        if msg:
            return msg
    return None


def _compare_stats(a: LeafStats, b: LeafStats, tol: float) -> str | None:
    if type(a) is not type(b):
        return "distribution types differ"
    if isinstance(a, CategoricalStats):
        if a.counts != b.counts:
            return f"counts {a.counts} != {b.counts}"
        return None
    assert isinstance(a, GaussianStats)
    if a.n != b.n:
        return f"n {a.n} != {b.n}"
    if not _close(a.mean, b.mean, tol):
        return f"mean {a.mean!r} != {b.mean!r}"
    if not _close(a.var, b.var, tol):
        return f"variance {a.var!r} != {b.var!r}"
    return None


def _compare_clustering(a: ClusteringModel | None, b: ClusteringModel | None) -> str | None:
    if (a is None) != (b is None):
        return "present in only one tree"
    if a is None:
        return None
    if not np.array_equal(a.row_ids, b.row_ids) or not np.array_equal(a.assignment, b.assignment):
        return "partitions differ"
    if not np.array_equal(a.final_centroids, b.final_centroids):
        return "centroids differ"
    if not np.array_equal(a.init_centroids, b.init_centroids):
        return "initializations differ"
    return None


def _compare_split(a: IndependenceModel | None, b: IndependenceModel | None) -> str | None:
    if (a is None) != (b is None):
        return "present in only one tree"
    if a is None:
        return None
    if a.components != b.components:
        return f"components {a.components} != {b.components}"
    if not np.array_equal(a.adjacency, b.adjacency):
        return "adjacency differs"
    if not np.array_equal(a.weights, b.weights):
        return "projections differ"
    return None
