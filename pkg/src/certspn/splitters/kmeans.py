"""k-means whose single-row deletions can be checked against a refit.

Initial centroids are drawn from the node seed inside the declared variable
bounds, never from data rows, so refitting after a deletion starts from the
same place. Two strategies:

* ``replay``: plain Lloyd; a deletion is checked by re-running Lloyd on the
  survivors from the stored initialization.
* ``quantized``: Lloyd with centroids snapped to a seeded lattice (the
  Q-k-Means idea). Per-iteration cluster sums are recorded, so a deletion that
  leaves every quantized centroid of the trajectory in place is certified
  without refitting. Anything else falls back to replay.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..dataset import DataView

REPLAY = "replay"
QUANTIZED = "quantized"

# distance (in lattice units) a mean must keep from a rounding boundary for the
# cheap check to trust it; covers float drift between subtracted and fresh sums
_BOUNDARY_MARGIN = 1e-7


@dataclass
class LloydStep:
    assignment: np.ndarray  # cluster index per fitted row
    sums: np.ndarray  # k x D
    counts: np.ndarray  # k
    centroids: np.ndarray  # k x D, after the update of this step


@dataclass
class ClusteringModel:
    k: int
    strategy: str
    row_ids: np.ndarray
    init_centroids: np.ndarray
    final_centroids: np.ndarray
    assignment: np.ndarray
    converged: bool
    max_iter: int
    quant_step: float = 0.0
    phase: np.ndarray | None = None
    steps: list[LloydStep] = field(default_factory=list)

    @property
    def cluster_counts(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.k)

    @property
    def clusters_exist(self) -> bool:
        return int(np.count_nonzero(self.cluster_counts)) >= 2

    def partition(self) -> list[np.ndarray]:
        """Row ids of each non-empty cluster, by cluster index."""
        return [self.row_ids[self.assignment == j] for j in range(self.k) if np.any(self.assignment == j)]

    def to_dict(self) -> dict:
        d = {
            "k": self.k,
            "strategy": self.strategy,
            "row_ids": self.row_ids.tolist(),
            "init_centroids": self.init_centroids.tolist(),
            "final_centroids": self.final_centroids.tolist(),
            "assignment": self.assignment.tolist(),
            "converged": self.converged,
            "max_iter": self.max_iter,
            "quant_step": self.quant_step,
            "phase": None if self.phase is None else self.phase.tolist(),
            "steps": [
                {
                    "assignment": s.assignment.tolist(),
                    "sums": s.sums.tolist(),
                    "counts": s.counts.tolist(),
                    "centroids": s.centroids.tolist(),
                }
                for s in self.steps
            ],
        }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ClusteringModel":
        k = int(d["k"])

        def mat(x):
            return np.asarray(x, dtype=np.float64).reshape(k, -1)

        return cls(
            k=k,
            strategy=d["strategy"],
            row_ids=np.asarray(d["row_ids"], dtype=np.int64),
            init_centroids=mat(d["init_centroids"]),
            final_centroids=mat(d["final_centroids"]),
            assignment=np.asarray(d["assignment"], dtype=np.int64),
            converged=bool(d["converged"]),
            max_iter=int(d["max_iter"]),
            quant_step=float(d["quant_step"]),
            phase=None if d["phase"] is None else np.asarray(d["phase"], dtype=np.float64),
            steps=[
                LloydStep(
                    np.asarray(s["assignment"], dtype=np.int64),
                    mat(s["sums"]),
                    np.asarray(s["counts"], dtype=np.int64),
                    mat(s["centroids"]),
                )
                for s in d["steps"]
            ],
        )


def _quantize(c: np.ndarray, step: float, phase: np.ndarray) -> np.ndarray:
    return phase + step * np.round((c - phase) / step)


def _near_boundary(c: np.ndarray, step: float, phase: np.ndarray) -> bool:
    u = (c - phase) / step
    return bool(np.any(np.abs(np.abs(u - np.floor(u)) - 0.5) < _BOUNDARY_MARGIN))


def _assign(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    d2 = ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)
    return d2.argmin(axis=1)  # first minimum wins: ties go to the lower index


def _lloyd(X, init, max_iter, step, phase, record):
    k = init.shape[0]
    C = init
    steps = []
    converged = False
    a = np.zeros(X.shape[0], dtype=np.int64)
    for _ in range(max_iter):
        a = _assign(X, C)
        counts = np.bincount(a, minlength=k)
        sums = np.zeros_like(C)
        for j in range(k):
            if counts[j]:
                sums[j] = X[a == j].sum(axis=0)
        newC = C.copy()
        nz = counts > 0
        newC[nz] = sums[nz] / counts[nz, None]
        if step:
            newC[nz] = _quantize(newC[nz], step, phase)
        if record:
            steps.append(LloydStep(a, sums, counts, newC))
        if np.array_equal(newC, C):
            converged = True
            break
        C = newC
    return C, a, converged, steps


def _initial(rng, k, dim, strategy, quant_step):
    init = rng.uniform(0.0, 1.0, size=(k, dim))
    if strategy == QUANTIZED:
        phase = rng.uniform(0.0, quant_step, size=dim)
        return _quantize(init, quant_step, phase), phase
    return init, None


def fit_clusters(
    view: DataView,
    node_seed: int,
    k: int = 2,
    strategy: str = QUANTIZED,
    quant_step: float = 0.05,
    max_iter: int = 100,
    record: bool = True,
) -> ClusteringModel:
    """Cluster the view's rows. Pure in (view contents, node_seed, settings)."""
    if len(view) < 1 or not view.scope:
        raise ValueError("clustering needs at least one row and one variable")
    if strategy not in (REPLAY, QUANTIZED):
        raise ValueError(f"unknown clustering strategy {strategy!r}")
    X = view.encoded()
    rng = np.random.default_rng([node_seed, 1])
    init, phase = _initial(rng, k, X.shape[1], strategy, quant_step)
    step = quant_step if strategy == QUANTIZED else 0.0
    C, a, converged, steps = _lloyd(X, init, max_iter, step, phase, record and strategy == QUANTIZED)
    return ClusteringModel(
        k=k,
        strategy=strategy,
        row_ids=view.row_ids.copy(),
        init_centroids=init,
        final_centroids=C,
        assignment=a,
        converged=converged,
        max_iter=max_iter,
        quant_step=step,
        phase=phase,
        steps=steps,
    )


def _refit(model: ClusteringModel, survivors: DataView) -> ClusteringModel:
    X = survivors.encoded()
    C, a, converged, steps = _lloyd(
        X, model.init_centroids, model.max_iter, model.quant_step, model.phase, model.strategy == QUANTIZED
    )
    return ClusteringModel(
        k=model.k,
        strategy=model.strategy,
        row_ids=survivors.row_ids.copy(),
        init_centroids=model.init_centroids,
        final_centroids=C,
        assignment=a,
        converged=converged,
        max_iter=model.max_iter,
        quant_step=model.quant_step,
        phase=model.phase,
        steps=steps,
    )


def _certified_delete(model: ClusteringModel, pos: int, x: np.ndarray) -> ClusteringModel | None:
    """Cheap deletion for the quantized strategy, or None when it can't be certified."""
    if not model.steps:
        return None
    prev = model.init_centroids
    new_steps = []
    for st in model.steps:
        j = st.assignment[pos]
        cnt = st.counts[j] - 1
        if cnt == 0:
            if not np.array_equal(prev[j], st.centroids[j]):
                return None
            sums_j = np.zeros_like(x)
        else:
            sums_j = st.sums[j] - x
            mean = sums_j / cnt
            if _near_boundary(mean, model.quant_step, model.phase):
                return None
            if not np.array_equal(_quantize(mean, model.quant_step, model.phase), st.centroids[j]):
                return None
        sums = st.sums.copy()
        sums[j] = sums_j
        counts = st.counts.copy()
        counts[j] = cnt
        new_steps.append(LloydStep(np.delete(st.assignment, pos), sums, counts, st.centroids))
        prev = st.centroids
    # a cluster emptied by the deletion changes the reported partition
    if model.cluster_counts[model.assignment[pos]] < 2:
        return None
    return ClusteringModel(
        k=model.k,
        strategy=model.strategy,
        row_ids=np.delete(model.row_ids, pos),
        init_centroids=model.init_centroids,
        final_centroids=model.final_centroids,
        assignment=np.delete(model.assignment, pos),
        converged=model.converged,
        max_iter=model.max_iter,
        quant_step=model.quant_step,
        phase=model.phase,
        steps=new_steps,
    )


def same_partition(old: ClusteringModel, new: ClusteringModel, removed: int) -> bool:
    """Whether ``new`` labels every survivor as ``old`` did and no cluster vanished."""
    keep = old.row_ids != removed
    if not np.array_equal(old.row_ids[keep], new.row_ids):
        return False
    if not np.array_equal(old.assignment[keep], new.assignment):
        return False
    return np.array_equal(old.cluster_counts > 0, new.cluster_counts > 0)


def remove_from_clusters(model: ClusteringModel, row_id: int, survivors: DataView) -> tuple[bool, ClusteringModel]:
    """Delete ``row_id``; returns (unchanged, model fitted on the survivors).

    ``survivors`` is the fitted view minus the row. ``unchanged`` holds iff a
    refit on the survivors from the same initialization yields the same
    partition of the surviving rows.
    """
    pos = int(np.searchsorted(model.row_ids, row_id))
    if pos >= model.row_ids.size or model.row_ids[pos] != row_id:
        raise KeyError(f"row {row_id} is not assigned by this clustering")
    if model.strategy == QUANTIZED:
        x = survivors.dataset.encoded[row_id, _encoded_columns(survivors)]
        fast = _certified_delete(model, pos, x)
        if fast is not None:
            return True, fast
    new = _refit(model, survivors)
    return same_partition(model, new, row_id), new


def _encoded_columns(view: DataView) -> np.ndarray:
    sl = view.dataset.encoded_slices
    return np.concatenate([np.arange(sl[v].start, sl[v].stop) for v in view.scope])
