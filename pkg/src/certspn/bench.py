"""Timing protocols: removal versus retraining, and state-recording overhead."""

from __future__ import annotations

import dataclasses
import os
import platform
import time
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset, Schema, categorical, gaussian
from .learn import LearnConfig, root_seed, same_shape, train, train_plain
from .unlearn import unlearn_spn


def host_metadata() -> dict:
    return {
        "platform": platform.platform(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "cpus": os.cpu_count(),
        "machine": platform.machine(),
    }


def mean_std(xs) -> tuple[float, float]:
    a = np.asarray(xs, dtype=np.float64)
    return float(a.mean()), float(a.std())  # population std: one repeat reports 0


def synthetic_table(n: int = 1000, seed: int = 0) -> Dataset:
    """Mixed 8-column data: six gaussian columns in three correlated groups over
    a 3-component mixture, plus two categorical columns tied to the mixture."""
    rng = np.random.default_rng(seed)
    z = rng.integers(0, 3, size=n)
    centers = rng.uniform(2, 8, size=(3, 6))
    latent = rng.normal(0, 1, size=(n, 3))
    X = centers[z] + 0.6 * np.repeat(latent, 2, axis=1) + rng.normal(0, 0.4, size=(n, 6))
    X = np.round(np.clip(X, 0, 10), 3)
    c1 = np.where(rng.random(n) < 0.8, z, rng.integers(0, 3, size=n))
    c2 = rng.integers(0, 4, size=n)
    schema = Schema(
        tuple(gaussian(f"g{j}", 0, 10) for j in range(6))
        + (categorical("c1", ["a", "b", "c"]), categorical("c2", ["w", "x", "y", "z"]))
    )
    return Dataset.from_array(schema, np.column_stack([X, c1, c2]))


@dataclass
class RepeatTiming:
    repeat: int
    sample: list[int]
    schedule: list[int]
    unlearn_s: float
    retrain_s: float
    train_original_s: float
    train_modified_s: float


@dataclass
class BenchmarkReport:
    config: dict
    seed: int
    sample_size: int
    m: int
    repeats: list[RepeatTiming] = field(default_factory=list)
    host: dict = field(default_factory=host_metadata)

    def summary(self) -> dict:
        out = {}
        for name in ("unlearn_s", "retrain_s", "train_original_s", "train_modified_s"):
            mu, sd = mean_std([getattr(r, name) for r in self.repeats])
            out[name] = {"mean": mu, "std": sd}
        u, r = out["unlearn_s"]["mean"], out["retrain_s"]["mean"]
        out["improvement"] = 1.0 - u / r if r > 0 else 0.0
        return out

    def records(self) -> list[dict]:
        """Line-delimited records: one per repeat, then the summary."""
        lines = [{"record": "repeat", **dataclasses.asdict(r)} for r in self.repeats]
        lines.append(
            {
                "record": "summary",
                "seed": self.seed,
                "sample_size": self.sample_size,
                "m": self.m,
                "config": self.config,
                "host": self.host,
                **self.summary(),
            }
        )
        return lines

    def table(self) -> str:
        s = self.summary()
        rows = [
            ("Unlearning [s]", s["unlearn_s"]),
            ("Retraining [s]", s["retrain_s"]),
            ("Original learner [s]", s["train_original_s"]),
            ("Modified learner [s]", s["train_modified_s"]),
        ]
        lines = [f"{'':24}{'mean':>12}{'std':>12}"]
        lines += [f"{name:24}{v['mean']:12.4f}{v['std']:12.4f}" for name, v in rows]
        lines.append(f"improvement of unlearning over retraining: {100 * s['improvement']:.1f}%")
        return "\n".join(lines)


def _timed(fn, *args):
    t0 = time.perf_counter()
    out = fn(*args)
    return out, time.perf_counter() - t0


def run_benchmark(
    dataset: Dataset, config: LearnConfig, sample_size: int = 1000, m: int = 100, repeats: int = 10, seed: int = 0
) -> BenchmarkReport:
    """Train on a random sample, then remove ``m`` random rows one by one.

    Each removal is timed against retraining from scratch on the same
    survivors; both totals are accumulated over the ``m`` removals.
    """
    live = dataset.row_ids
    if live.size < sample_size:
        raise ValueError(f"dataset has {live.size} rows, the sample needs {sample_size}")
    if not 1 <= m < sample_size:
        raise ValueError("m must be between 1 and sample_size - 1")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    rng = np.random.default_rng(seed)
    report = BenchmarkReport(config.to_dict(), seed, sample_size, m)
    for rep in range(repeats):
        sample = np.sort(rng.choice(live, size=sample_size, replace=False))
        schedule = rng.choice(sample_size, size=m, replace=False)
        data = dataset.subset(sample)
        _, t_orig = _timed(train_plain, data, config)
        spn, t_mod = _timed(train, data, config)
        unlearn_s = 0.0
        for r in schedule:
            _, dt = _timed(unlearn_spn, spn, int(r))
            unlearn_s += dt
        retrain_s = 0.0
        survivors = data
        for r in schedule:
            survivors = survivors.without(int(r))
            _, dt = _timed(train, survivors, config)
            retrain_s += dt
        report.repeats.append(
            RepeatTiming(rep, sample.tolist(), schedule.tolist(), unlearn_s, retrain_s, t_orig, t_mod)
        )
    return report


@dataclass
class OverheadReport:
    config: dict
    original_s: list[float]
    modified_s: list[float]
    identical: bool
    difference: str
    host: dict = field(default_factory=host_metadata)

    def summary(self) -> dict:
        o, m = mean_std(self.original_s), mean_std(self.modified_s)
        return {
            "original_s": {"mean": o[0], "std": o[1]},
            "modified_s": {"mean": m[0], "std": m[1]},
            "ratio": m[0] / o[0] if o[0] > 0 else float("inf"),
            "identical": self.identical,
        }

    def table(self) -> str:
        s = self.summary()
        return "\n".join(
            [
                f"{'':24}{'mean':>12}{'std':>12}",
                f"{'Original learner [s]':24}{s['original_s']['mean']:12.4f}{s['original_s']['std']:12.4f}",
                f"{'Modified learner [s]':24}{s['modified_s']['mean']:12.4f}{s['modified_s']['std']:12.4f}",
                f"ratio {s['ratio']:.3f}; trees identical: {self.identical}",
            ]
        )


def run_train_overhead(dataset: Dataset, config: LearnConfig, repeats: int = 10) -> OverheadReport:
    """Time the state-recording learner against the stripped one on the same data and seed."""
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    orig, mod = [], []
    plain = spn = None
    for _ in range(repeats):
        plain, dt = _timed(train_plain, dataset, config)
        orig.append(dt)
        spn, dt = _timed(train, dataset, config)
        mod.append(dt)
    identical, diff = same_shape(spn.root, plain)
    return OverheadReport(config.to_dict(), orig, mod, identical, diff)
