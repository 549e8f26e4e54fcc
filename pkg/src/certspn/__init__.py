"""Sum-product networks whose training rows can be removed exactly."""

from .dataset import Dataset, DataView, Schema, Variable, categorical, gaussian, load_csv, load_schema
from .learn import LearnConfig, learn_spn, train
from .spn import Spn, log_likelihood, structural_equal, validate
from .unlearn import RemovalOutcome, unlearn_batch, unlearn_spn

__all__ = [
    "Dataset",
    "DataView",
    "LearnConfig",
    "RemovalOutcome",
    "Schema",
    "Spn",
    "Variable",
    "categorical",
    "gaussian",
    "learn_spn",
    "load_csv",
    "load_schema",
    "log_likelihood",
    "structural_equal",
    "train",
    "unlearn_batch",
    "unlearn_spn",
    "validate",
]
