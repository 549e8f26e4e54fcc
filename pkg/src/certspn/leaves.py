"""Univariate leaf distributions whose sufficient statistics support point removal.

Gaussian sums are kept as exact rationals (every float64 is a dyadic
rational), so subtracting a point reproduces a from-scratch fit bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

SIGMA_MIN = 1e-6
_LOG_2PI = math.log(2.0 * math.pi)


class EmptyLeafError(ValueError):
    pass


def _exact_sums(values: np.ndarray) -> tuple[Fraction, Fraction]:
    """Exact sum and sum of squares of float64 values."""
    if values.size == 0:
        return Fraction(0), Fraction(0)
    mant, expo = np.frexp(values)
    # mantissa * 2**53 is an integer for every finite double
    ints = (mant * 9007199254740992.0).astype(np.int64).tolist()
    shifts = (expo.astype(np.int64) - 53).tolist()
    base = min(shifts)
    s1 = sum(m << (e - base) for m, e in zip(ints, shifts))
    s2 = sum((m * m) << (2 * (e - base)) for m, e in zip(ints, shifts))
    if base >= 0:
        return Fraction(s1 << base), Fraction(s2 << (2 * base))
    return Fraction(s1, 1 << -base), Fraction(s2, 1 << (-2 * base))


@dataclass
class GaussianStats:
    n: int
    s1: Fraction
    s2: Fraction
    mean: float = 0.0
    var: float = 0.0

    def __post_init__(self):
        self._refresh()

    @classmethod
    def fit(cls, values) -> "GaussianStats":
        values = np.asarray(values, dtype=np.float64)
        if values.size == 0:
            raise EmptyLeafError("cannot fit a leaf on no data")
        s1, s2 = _exact_sums(values)
        return cls(int(values.size), s1, s2)

    def _refresh(self) -> None:
        m = self.s1 / self.n
        self.mean = float(m)
        # population variance, exact before the final rounding
        self.var = float(self.s2 / self.n - m * m)

    def remove(self, value: float) -> None:
        if self.n <= 1:
            raise EmptyLeafError("empty leaf: removal would leave no data")
        x = Fraction(float(value))
        self.n -= 1
        self.s1 -= x
        self.s2 -= x * x
        self._refresh()

    def log_density(self, x):
        sigma = max(math.sqrt(self.var), SIGMA_MIN)
        z = (np.asarray(x, dtype=np.float64) - self.mean) / sigma
        return -0.5 * (_LOG_2PI + z * z) - math.log(sigma)

    def to_dict(self) -> dict:
        return {"type": "gaussian", "n": self.n, "s1": str(self.s1), "s2": str(self.s2)}

    @classmethod
    def from_dict(cls, d: dict) -> "GaussianStats":
        return cls(int(d["n"]), Fraction(d["s1"]), Fraction(d["s2"]))

    def params(self) -> tuple[float, float]:
        return self.mean, self.var


@dataclass
class CategoricalStats:
    counts: list[int]
    alpha: float = 0.0

    @classmethod
    def fit(cls, codes, n_categories: int, alpha: float = 0.0) -> "CategoricalStats":
        codes = np.asarray(codes, dtype=np.int64)
        if codes.size == 0:
            raise EmptyLeafError("cannot fit a leaf on no data")
        return cls(np.bincount(codes, minlength=n_categories).tolist(), float(alpha))

    @property
    def n(self) -> int:
        return sum(self.counts)

    def probability(self, code: int) -> Fraction | float:
        if self.alpha == 0:
            return Fraction(self.counts[code], self.n)
        return (self.counts[code] + self.alpha) / (self.n + self.alpha * len(self.counts))

    def remove(self, code) -> None:
        c = int(code)
        if self.counts[c] <= 0:
            raise ValueError(f"category {c} has no counts to remove")
        if self.n <= 1:
            raise EmptyLeafError("empty leaf: removal would leave no data")
        self.counts[c] -= 1

    def log_density(self, x):
        counts = np.asarray(self.counts, dtype=np.float64) + self.alpha
        with np.errstate(divide="ignore"):
            logp = np.log(counts) - math.log(counts.sum())
        return logp[np.asarray(x, dtype=np.int64)]

    def to_dict(self) -> dict:
        return {"type": "categorical", "counts": list(self.counts), "alpha": self.alpha}

    @classmethod
    def from_dict(cls, d: dict) -> "CategoricalStats":
        return cls([int(c) for c in d["counts"]], float(d["alpha"]))


LeafStats = GaussianStats | CategoricalStats


def fit_stats(values, var, alpha: float = 0.0) -> LeafStats:
    """Fit leaf statistics for schema variable ``var`` on a column (ascending row order)."""
    if var.is_categorical:
        return CategoricalStats.fit(values, len(var.categories), alpha)
    return GaussianStats.fit(values)


def stats_from_dict(d: dict) -> LeafStats:
    if d["type"] == "gaussian":
        return GaussianStats.from_dict(d)
    return CategoricalStats.from_dict(d)
