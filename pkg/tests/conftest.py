import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from certspn.dataset import Dataset, Schema, categorical, gaussian

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def gauss_schema(d, lo=0.0, hi=10.0):
    return Schema(tuple(gaussian(f"g{j}", lo, hi) for j in range(d)))


def make_dataset(X, lo=0.0, hi=10.0):
    X = np.asarray(X, dtype=float)
    return Dataset.from_array(gauss_schema(X.shape[1], lo, hi), X)


def two_blobs(n_each=25, d=2, seed=0, gap=6.0):
    rng = np.random.default_rng(seed)
    a = rng.normal(2.0, 0.3, size=(n_each, d))
    b = rng.normal(2.0 + gap, 0.3, size=(n_each, d))
    return make_dataset(np.clip(np.vstack([a, b]), 0, 10))


@pytest.fixture
def mixed_schema():
    return Schema((categorical("sex", ["M", "F", "I"]), gaussian("length", 0.0, 1.0), gaussian("weight", 0.0, 3.0)))
