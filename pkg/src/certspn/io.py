"""Versioned, checksummed model files.

A model file is one JSON document holding the tree with all learning state,
the (tombstoned) dataset and the config. The payload is written in canonical
form, so saving the same model twice gives identical bytes and floats
round-trip exactly.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .dataset import Dataset, Schema
from .learn import LearnConfig
from .leaves import stats_from_dict
from .spn import Node, NodeState, Op, Spn
from .splitters import ClusteringModel, IndependenceModel

FORMAT = "certspn-model"
VERSION = 1


class ModelFileError(ValueError):
    pass


class VersionError(ModelFileError):
    pass


class CorruptModelError(ModelFileError):
    pass


def _opt(model):
    return None if model is None else model.to_dict()


def node_to_dict(node: Node) -> dict:
    st = node.state
    return {
        "kind": node.kind,
        "state": {
            "scope": list(st.scope),
            "op": st.op.value,
            "data": st.data.tolist(),
            "num_data": st.num_data,
            "exist_uninformative": st.exist_uninformative,
            "all_uninformative": st.all_uninformative,
            "independencies": st.independencies,
            "clusters": st.clusters,
            "seed": st.seed,
            "path": list(st.path),
            "clustering": _opt(st.clustering),
            "variable_split": _opt(st.variable_split),
            "decision_analyses": None
            if st.decision_analyses is None
            else [_opt(st.decision_analyses[0]), _opt(st.decision_analyses[1])],
        },
        "children": [node_to_dict(c) for c in node.children],
        "child_counts": list(node.child_counts),
        "stats": None if node.stats is None else node.stats.to_dict(),
    }


def node_from_dict(d: dict) -> Node:
    s = d["state"]
    da = s["decision_analyses"]
    state = NodeState(
        scope=tuple(s["scope"]),
        op=Op(s["op"]),
        data=np.asarray(s["data"], dtype=np.int64),
        num_data=int(s["num_data"]),
        exist_uninformative=bool(s["exist_uninformative"]),
        all_uninformative=bool(s["all_uninformative"]),
        independencies=s["independencies"],
        clusters=s["clusters"],
        seed=int(s["seed"]),
        path=tuple(s["path"]),
        clustering=None if s["clustering"] is None else ClusteringModel.from_dict(s["clustering"]),
        variable_split=None if s["variable_split"] is None else IndependenceModel.from_dict(s["variable_split"]),
        decision_analyses=None
        if da is None
        else (ClusteringModel.from_dict(da[0]), IndependenceModel.from_dict(da[1])),
    )
    return Node(
        kind=d["kind"],
        state=state,
        children=[node_from_dict(c) for c in d["children"]],
        child_counts=[int(c) for c in d["child_counts"]],
        stats=None if d["stats"] is None else stats_from_dict(d["stats"]),
    )


def spn_to_payload(spn: Spn) -> dict:
    values = [None if i in spn.dataset.removed else row for i, row in enumerate(spn.dataset.values.tolist())]
    return {
        "schema": spn.dataset.schema.to_dict(),
        "dataset": {"values": values, "removed": sorted(spn.dataset.removed)},
        "config": spn.config.to_dict(),
        "root": node_to_dict(spn.root),
    }


def spn_from_payload(p: dict) -> Spn:
    schema = Schema.from_dict(p["schema"])
    d = len(schema)
    values = np.array([[np.nan] * d if row is None else row for row in p["dataset"]["values"]], dtype=np.float64)
    dataset = Dataset(schema, values.reshape(-1, d), frozenset(p["dataset"]["removed"]))
    return Spn(node_from_dict(p["root"]), dataset, LearnConfig.from_dict(p["config"]))


def canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def dumps(spn: Spn) -> str:
    body = canonical(spn_to_payload(spn))
    digest = hashlib.sha256(body.encode("utf-8")).hexdigest()
    # the payload is spliced in verbatim so the checksum covers the exact bytes
    return f'{{"format":"{FORMAT}","version":{VERSION},"sha256":"{digest}","payload":{body}}}\n'


def loads(text: str) -> Spn:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise CorruptModelError(f"model file is not valid JSON: {e}") from None
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise CorruptModelError("not a model file")
    if doc.get("version") != VERSION:
        raise VersionError(f"model file version {doc.get('version')!r} is not supported (expected {VERSION})")
    payload = doc.get("payload")
    if hashlib.sha256(canonical(payload).encode("utf-8")).hexdigest() != doc.get("sha256"):
        raise CorruptModelError("model file checksum mismatch")
    try:
        return spn_from_payload(payload)
    except (KeyError, TypeError, ValueError) as e:
        raise CorruptModelError(f"model file payload is malformed: {e}") from None


def atomic_write(path: str | Path, text: str) -> None:
    """Write to a temporary file next to ``path`` then rename over it."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def save(spn: Spn, path: str | Path) -> None:
    atomic_write(path, dumps(spn))


def load(path: str | Path) -> Spn:
    return loads(Path(path).read_text(encoding="utf-8"))
