"""Executable removal guarantees.

* ``retrain_oracle``: the learner run on the survivors with the original seed.
* ``check_zero_cr``: removal output must equal the oracle's output, trial by trial.
* ``check_revision``: at every node a removed row passes through, the
  predicted operation must equal the operation the learner actually picks on
  the survivors.

The synthetic generators are shaped to reach every decision branch,
including the rare operation changes.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import Dataset, Schema, categorical, gaussian
from .learn import EXACT_REPLAY, INCREMENTAL, LearnConfig, decide_operation, train
from .spn import Op, Spn, fmt_path, iter_nodes, structural_equal, validate
from .unlearn import revise, unlearn_batch

LO, HI = 0.0, 10.0
FAMILIES = ("blobs", "independent", "constant", "near_constant", "outlier", "categorical", "threshold", "diffuse")

# every operation change the revision function can produce
TRANSITIONS = (
    (Op.CL, Op.CL),
    (Op.NF, Op.NF),
    (Op.NF, Op.SU),
    (Op.NF, Op.SD),
    (Op.NF, Op.SV),
    (Op.SD, Op.SU),
    (Op.SD, Op.NF),
    (Op.SD, Op.SV),
    (Op.SD, Op.SD),
    (Op.SV, Op.SU),
    (Op.SV, Op.NF),
    (Op.SV, Op.SD),
    (Op.SV, Op.SV),
    (Op.SU, Op.SU),
    (Op.SU, Op.NF),
)

# settings that make splits happen on small data
VERIFY_CONFIG = LearnConfig(threshold=6, rdc_features=3, rdc_threshold=0.6, quant_step=0.05)


# -- generators ---------------------------------------------------------------


def _clip(x):
    return np.round(np.clip(x, LO, HI), 2)


def _gauss_schema(d: int) -> Schema:
    return Schema(tuple(gaussian(f"g{j}", LO, HI) for j in range(d)))


def _blobs(rng, n, d):
    k = int(rng.integers(2, 4))
    centers = rng.uniform(1.5, 8.5, size=(k, d))
    spread = rng.uniform(0.2, 1.0)
    z = rng.integers(0, k, size=n)
    return _clip(centers[z] + rng.normal(0, spread, size=(n, d)))


def _independent(rng, n, d):
    blocks = np.sort(rng.integers(0, max(2, d // 2 + 1), size=d))
    X = np.empty((n, d))
    for b in np.unique(blocks):
        z = rng.uniform(2, 8, size=n)
        for j in np.flatnonzero(blocks == b):
            X[:, j] = z * rng.choice([-1, 1]) * 0.5 + 5 + rng.normal(0, 0.3, size=n)
    return _clip(X)


def _diffuse(rng, n, d):
    # one correlated cloud: clustering often finds a single cluster, and a
    # removal near the border can split it
    z = rng.normal(0, 1, size=(n, 1))
    return _clip(rng.uniform(3, 7, size=d) + z * rng.uniform(0.5, 2.0, size=d) + rng.normal(0, 0.3, size=(n, d)))


def _informative(rng, n, d):
    return _blobs(rng, n, d) if rng.random() < 0.5 else _independent(rng, n, d)


def _with_constants(rng, X, near: bool):
    n, d = X.shape
    m = int(rng.integers(1, d + 1)) if rng.random() < 0.3 else int(rng.integers(1, max(2, d)))
    breaker = int(rng.integers(n))
    for j in rng.choice(d, size=min(m, d), replace=False):
        X[:, j] = np.round(rng.uniform(LO, HI), 2)
        if near and rng.random() < 0.7:
            # one row breaks the constant; removing it makes the column uninformative
            X[breaker if rng.random() < 0.5 else int(rng.integers(n)), j] = np.round(rng.uniform(LO, HI), 2)
    if near and rng.random() < 0.3:
        # everything constant but one column, itself broken by a single row
        j = int(rng.integers(d))
        X[:] = np.round(rng.uniform(LO, HI, size=d), 2)
        X[breaker, j] = np.round(rng.uniform(LO, HI), 2)
    return X


def generate(family: str, rng: np.random.Generator, n: int, d: int, threshold: int = 6) -> Dataset:
    """One synthetic dataset of the given family."""
    if family == "categorical":
        k = int(rng.integers(2, 4))
        z = rng.integers(0, k, size=n)
        vars_, cols = [], []
        for j in range(d):
            if rng.random() < 0.5:
                cats = [f"c{i}" for i in range(int(rng.integers(2, 5)))]
                table = rng.dirichlet(np.full(len(cats), 0.5), size=k)
                cols.append(np.array([rng.choice(len(cats), p=table[zi]) for zi in z], dtype=np.float64))
                vars_.append(categorical(f"v{j}", cats))
            else:
                centers = rng.uniform(2, 8, size=k)
                cols.append(_clip(centers[z] + rng.normal(0, 0.5, size=n)))
                vars_.append(gaussian(f"v{j}", LO, HI))
        return Dataset.from_array(Schema(tuple(vars_)), np.column_stack(cols))
    if family == "threshold":
        n = threshold + int(rng.integers(0, 3))
        return Dataset.from_array(_gauss_schema(d), _informative(rng, n, d))
    if family == "outlier":
        X = _informative(rng, n, d)
        X[int(rng.integers(n))] = rng.choice([LO, HI], size=d)
        return Dataset.from_array(_gauss_schema(d), X)
    X = {"blobs": _blobs, "independent": _independent, "diffuse": _diffuse}.get(family, _informative)(rng, n, d)
    if family in ("constant", "near_constant"):
        X = _with_constants(rng, X, near=family == "near_constant")
    return Dataset.from_array(_gauss_schema(d), X)


def fingerprint(dataset: Dataset) -> str:
    h = hashlib.sha256(json.dumps(dataset.schema.to_dict(), sort_keys=True).encode())
    h.update(np.ascontiguousarray(dataset.values).tobytes())
    return h.hexdigest()[:16]


# -- oracle and checkers ----------------------------------------------------------


def retrain_oracle(dataset: Dataset, removed, config: LearnConfig) -> Spn:
    """The learner on ``dataset`` minus ``removed`` with the original master seed."""
    for r in sorted(set(int(r) for r in removed)):
        dataset = dataset.without(r)
    if dataset.n_rows == 0:
        raise ValueError("no surviving rows to retrain on")
    return train(dataset, config)


@dataclass
class CrFailure:
    fingerprint: str
    family: str
    seed: int
    row_ids: tuple[int, ...]
    difference: str
    bundle: str | None = None


@dataclass
class CrReport:
    mode: str
    trials: int = 0
    passes: int = 0
    failures: list[CrFailure] = field(default_factory=list)
    ops: Counter = field(default_factory=Counter)
    actions: Counter = field(default_factory=Counter)

    @property
    def ok(self) -> bool:
        return self.trials > 0 and self.passes == self.trials

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "trials": self.trials,
            "passes": self.passes,
            "failures": [dataclasses.asdict(f) for f in self.failures],
            "ops": dict(sorted(self.ops.items())),
            "actions": dict(sorted(self.actions.items())),
        }


def _save_bundle(bundle_dir, trial, dataset, config, rows, family) -> str:
    path = Path(bundle_dir) / f"cr-failure-{trial:05d}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    bundle = {
        "family": family,
        "schema": dataset.schema.to_dict(),
        "values": dataset.values.tolist(),
        "config": config.to_dict(),
        "remove": list(rows),
    }
    path.write_text(json.dumps(bundle) + "\n", encoding="utf-8")
    return str(path)


def check_zero_cr(
    trials: int,
    config: LearnConfig = VERIFY_CONFIG,
    mode: str = EXACT_REPLAY,
    seed: int = 0,
    n_range: tuple[int, int] = (10, 200),
    d_range: tuple[int, int] = (1, 8),
    batch: int = 1,
    families=FAMILIES,
    bundle_dir=None,
) -> CrReport:
    """Compare removal against the retrain oracle on ``trials`` synthetic cases.

    Every model involved is also validated; an invalid model fails its trial.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if mode not in (EXACT_REPLAY, INCREMENTAL):
        raise ValueError(f"unknown mode {mode!r}")
    tol = 0.0 if mode == EXACT_REPLAY else 1e-9
    report = CrReport(mode)
    for trial in range(trials):
        rng = np.random.default_rng([seed, trial])
        family = families[trial % len(families)]
        n = int(rng.integers(n_range[0], n_range[1] + 1))
        d = int(rng.integers(d_range[0], d_range[1] + 1))
        dataset = generate(family, rng, n, d, config.threshold)
        cfg = dataclasses.replace(config, removal_mode=mode, master_seed=int(rng.integers(0, 2**63)))
        rows = tuple(sorted(int(r) for r in rng.choice(dataset.n_rows, size=min(batch, dataset.n_rows - 1), replace=False)))
        report.trials += 1
        problem = _one_trial(dataset, cfg, rows, tol, report)
        if problem is None:
            report.passes += 1
            continue
        bundle = _save_bundle(bundle_dir, trial, dataset, cfg, rows, family) if bundle_dir else None
        report.failures.append(CrFailure(fingerprint(dataset), family, cfg.master_seed, rows, problem, bundle))
    return report


def _one_trial(dataset, cfg, rows, tol, report) -> str | None:
    try:
        spn = train(dataset, cfg)
        report.ops.update(n.op.value for n in iter_nodes(spn.root))
        problems = validate(spn)
        if problems:
            return f"trained model invalid: {problems[0]}"
        outcome = unlearn_batch(spn, rows)
        report.actions.update(a.split("(")[0] for _, a in outcome.log)
        oracle = retrain_oracle(dataset, rows, cfg)
        for name, model in (("unlearned", outcome.spn), ("oracle", oracle)):
            problems = validate(model)
            if problems:
                return f"{name} model invalid: {problems[0]}"
        ok, diff = structural_equal(outcome.spn, oracle, tol)
        return None if ok else diff
    except Exception as e:  # noqa: BLE001 - a crash is a failed trial, reported with its inputs
        return f"{type(e).__name__}: {e}"


@dataclass
class RevisionMismatch:
    family: str
    seed: int
    row_id: int
    path: str
    old: str
    predicted: str
    actual: str
    detail: str = ""


@dataclass
class RevisionReport:
    checks: int = 0
    datasets: int = 0
    mismatches: list[RevisionMismatch] = field(default_factory=list)
    transitions: Counter = field(default_factory=Counter)
    invalid: list[str] = field(default_factory=list)

    @property
    def missing_transitions(self) -> list[tuple[Op, Op]]:
        return [t for t in TRANSITIONS if self.transitions[t] == 0]

    @property
    def ok(self) -> bool:
        return not self.mismatches and not self.missing_transitions and not self.invalid

    def to_dict(self) -> dict:
        return {
            "checks": self.checks,
            "datasets": self.datasets,
            "mismatches": [dataclasses.asdict(m) for m in self.mismatches],
            "transitions": {f"{a.value}->{b.value}": self.transitions[(a, b)] for a, b in TRANSITIONS},
            "missing_transitions": [f"{a.value}->{b.value}" for a, b in self.missing_transitions],
            "invalid": list(self.invalid),
        }


def _flags(d) -> tuple:
    return (d.exist_uninformative, d.all_uninformative, d.independencies, d.clusters)


def check_node_revisions(spn: Spn, row_id: int, report: RevisionReport, family: str = "", seed: int = 0) -> None:
    """Check the prediction at every node whose data holds ``row_id``."""
    dataset, config = spn.dataset, spn.config
    for node in iter_nodes(spn.root):
        st = node.state
        if not st.contains(row_id) or st.num_data < 2:
            continue  # a lone row cannot be removed from its node
        survivors = dataset.view(st.data[st.data != row_id], st.scope)
        predicted, facts = revise(node, row_id, survivors, config)
        actual = decide_operation(survivors, config, st.seed)
        report.checks += 1
        report.transitions[(st.op, predicted)] += 1
        detail = ""
        if predicted == actual.op and _flags(facts.decision(predicted)) != _flags(actual):
            detail = f"flags {_flags(facts.decision(predicted))} != {_flags(actual)}"
        if predicted != actual.op or detail:
            report.mismatches.append(
                RevisionMismatch(family, seed, row_id, fmt_path(st.path), st.op.value, predicted.value, actual.op.value, detail)
            )


def check_revision(
    config: LearnConfig = VERIFY_CONFIG,
    seeds: int = 20,
    n_range: tuple[int, int] = (6, 25),
    d_range: tuple[int, int] = (2, 4),
    families=FAMILIES,
    per_family: int = 3,
) -> RevisionReport:
    """Every removable row of every generated dataset, at every node it reaches."""
    report = RevisionReport()
    for s in range(seeds):
        for fi, family in enumerate(families):
            for rep in range(per_family):
                rng = np.random.default_rng([s, fi, rep])
                n = int(rng.integers(n_range[0], n_range[1] + 1))
                d = int(rng.integers(d_range[0], d_range[1] + 1))
                dataset = generate(family, rng, n, d, config.threshold)
                cfg = dataclasses.replace(config, master_seed=int(rng.integers(0, 2**63)))
                spn = train(dataset, cfg)
                report.datasets += 1
                report.invalid.extend(f"{family} seed={s}: {p}" for p in validate(spn))
                for r in dataset.row_ids:
                    check_node_revisions(spn, int(r), report, family, s)
    return report
