"""Data and variable splitters consulted by the structure learner."""

from .components import UnionFind, connected_components
from .kmeans import QUANTIZED, REPLAY, ClusteringModel, fit_clusters, remove_from_clusters, same_partition
from .rdc import IndependenceModel, fit_independence, rdc_matrix, remove_from_independence

__all__ = [
    "QUANTIZED",
    "REPLAY",
    "ClusteringModel",
    "IndependenceModel",
    "UnionFind",
    "connected_components",
    "fit_clusters",
    "fit_independence",
    "rdc_matrix",
    "remove_from_clusters",
    "remove_from_independence",
    "same_partition",
]
