"""Pairwise randomized dependency coefficients with replayable projections."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from ..dataset import DataView
from .components import connected_components

_RANK_TOL = 1e-10


@dataclass
class IndependenceModel:
    scope: tuple[int, ...]
    row_ids: np.ndarray
    weights: np.ndarray  # |scope| x 2 x k_f, applied to [copula value, 1]
    n_features: int
    scale: float
    threshold: float
    coefficients: np.ndarray
    adjacency: np.ndarray
    components: tuple[tuple[int, ...], ...]  # in schema variable indices

    @property
    def independencies_exist(self) -> bool:
        return len(self.components) >= 2

    def to_dict(self) -> dict:
        return {
            "scope": list(self.scope),
            "row_ids": self.row_ids.tolist(),
            "weights": self.weights.tolist(),
            "n_features": self.n_features,
            "scale": self.scale,
            "threshold": self.threshold,
            "coefficients": self.coefficients.tolist(),
            "adjacency": self.adjacency.astype(int).tolist(),
            "components": [list(c) for c in self.components],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IndependenceModel":
        return cls(
            scope=tuple(d["scope"]),
            row_ids=np.asarray(d["row_ids"], dtype=np.int64),
            weights=np.asarray(d["weights"], dtype=np.float64).reshape(len(d["scope"]), 2, -1),
            n_features=int(d["n_features"]),
            scale=float(d["scale"]),
            threshold=float(d["threshold"]),
            coefficients=np.asarray(d["coefficients"], dtype=np.float64),
            adjacency=np.asarray(d["adjacency"], dtype=bool),
            components=tuple(tuple(c) for c in d["components"]),
        )


def draw_projections(node_seed: int, n_vars: int, n_features: int) -> np.ndarray:
    rng = np.random.default_rng([node_seed, 2])
    return rng.standard_normal(size=(n_vars, 2, n_features))


def _feature_basis(u: np.ndarray, w: np.ndarray, scale: float) -> np.ndarray:
    """Orthonormal basis of the centred sine features of one copula column."""
    design = np.column_stack([u, np.ones_like(u)])
    feats = np.sin((scale / 2.0) * design @ w)
    feats = feats - feats.mean(axis=0)
    U, s, _ = np.linalg.svd(feats, full_matrices=False)
    if s.size == 0 or s[0] <= 1e-12:
        return U[:, :0]
    return U[:, s > _RANK_TOL * s[0]]


def rdc_matrix(view: DataView, weights: np.ndarray, scale: float) -> np.ndarray:
    n_vars = len(view.scope)
    coef = np.eye(n_vars)
    if len(view) < 2:
        return coef
    bases = []
    for i, v in enumerate(view.scope):
        col = view.column(v)
        u = rankdata(col, method="average") / col.size
        bases.append(_feature_basis(u, weights[i], scale))
    for i in range(n_vars):
        for j in range(i + 1, n_vars):
            if bases[i].shape[1] == 0 or bases[j].shape[1] == 0:
                c = 0.0
            else:
                c = float(np.linalg.svd(bases[i].T @ bases[j], compute_uv=False)[0])
            coef[i, j] = coef[j, i] = min(max(c, 0.0), 1.0)
    return coef


def _build(view, weights, n_features, scale, threshold) -> IndependenceModel:
    coef = rdc_matrix(view, weights, scale)
    adjacency = coef >= threshold
    local = connected_components(adjacency)
    components = tuple(tuple(view.scope[i] for i in comp) for comp in local)
    return IndependenceModel(
        scope=view.scope,
        row_ids=view.row_ids.copy(),
        weights=weights,
        n_features=n_features,
        scale=scale,
        threshold=threshold,
        coefficients=coef,
        adjacency=adjacency,
        components=components,
    )


def fit_independence(
    view: DataView, node_seed: int, threshold: float = 0.3, n_features: int = 20, scale: float = 1.0 / 6.0
) -> IndependenceModel:
    if len(view.scope) < 2:
        raise ValueError("independence analysis needs at least two variables")
    weights = draw_projections(node_seed, len(view.scope), n_features)
    return _build(view, weights, n_features, scale, threshold)


def remove_from_independence(
    model: IndependenceModel, row_id: int, survivors: DataView
) -> tuple[bool, IndependenceModel]:
    """Recompute coefficients on the survivors with the stored projections.

    Returns (unchanged, new model); unchanged iff the component partition is
    the same. Coefficients themselves may drift.
    """
    pos = int(np.searchsorted(model.row_ids, row_id))
    if pos >= model.row_ids.size or model.row_ids[pos] != row_id:
        raise KeyError(f"row {row_id} was not part of the fitted data")
    new = _build(survivors.with_scope(model.scope), model.weights, model.n_features, model.scale, model.threshold)
    return new.components == model.components, new
