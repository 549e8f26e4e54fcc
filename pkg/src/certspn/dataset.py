"""Typed tabular data: schemas, datasets with stable row ids, and scoped views."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

SCHEMA_VERSION = 1

CATEGORICAL = "categorical"
GAUSSIAN = "gaussian"


class DataError(ValueError):
    """Raised for malformed schemas, CSV input, or out-of-domain values."""


@dataclass(frozen=True)
class Variable:
    name: str
    kind: str
    categories: tuple[str, ...] = ()
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if not self.name:
            raise DataError("variable name must be nonempty")
        if self.kind == CATEGORICAL:
            if not self.categories:
                raise DataError(f"categorical variable {self.name!r} has an empty domain")
            if len(set(self.categories)) != len(self.categories):
                raise DataError(f"categorical variable {self.name!r} has duplicate labels")
        elif self.kind == GAUSSIAN:
            if not (math.isfinite(self.lo) and math.isfinite(self.hi)) or not self.lo < self.hi:
                raise DataError(
                    f"gaussian variable {self.name!r} needs finite bounds lo < hi, got [{self.lo}, {self.hi}]"
                )
        else:
            raise DataError(f"unknown variable kind {self.kind!r}")

    @property
    def is_categorical(self) -> bool:
        return self.kind == CATEGORICAL

    @property
    def width(self) -> int:
        """Number of coordinates this variable occupies in the clustering encoding."""
        return len(self.categories) if self.is_categorical else 1

    def to_dict(self) -> dict:
        if self.is_categorical:
            return {"name": self.name, "kind": self.kind, "categories": list(self.categories)}
        return {"name": self.name, "kind": self.kind, "bounds": [self.lo, self.hi]}

    @classmethod
    def from_dict(cls, d: dict) -> "Variable":
        kind = d.get("kind")
        if kind == CATEGORICAL:
            return cls(d["name"], kind, categories=tuple(str(c) for c in d["categories"]))
        if kind == GAUSSIAN:
            lo, hi = d["bounds"]
            return cls(d["name"], kind, lo=float(lo), hi=float(hi))
        raise DataError(f"unknown variable kind {kind!r}")


def categorical(name: str, categories: Iterable) -> Variable:
    return Variable(name, CATEGORICAL, categories=tuple(str(c) for c in categories))


def gaussian(name: str, lo: float, hi: float) -> Variable:
    return Variable(name, GAUSSIAN, lo=float(lo), hi=float(hi))


@dataclass(frozen=True)
class Schema:
    variables: tuple[Variable, ...]

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        if not self.variables:
            raise DataError("schema has no variables")
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise DataError("variable names must be unique")

    def __len__(self) -> int:
        return len(self.variables)

    def __getitem__(self, i: int) -> Variable:
        return self.variables[i]

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "variables": [v.to_dict() for v in self.variables]}

    @classmethod
    def from_dict(cls, d: dict) -> "Schema":
        version = d.get("schema_version")
        if version != SCHEMA_VERSION:
            raise DataError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
        try:
            return cls(tuple(Variable.from_dict(v) for v in d["variables"]))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, DataError):
                raise
            raise DataError(f"malformed schema entry: {exc}") from exc


def load_schema(path: str | Path) -> Schema:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"schema file {path} is not valid JSON: {exc}") from exc
    return Schema.from_dict(raw)


def save_schema(schema: Schema, path: str | Path) -> None:
    Path(path).write_text(json.dumps(schema.to_dict(), indent=2) + "\n", encoding="utf-8")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Rows of values conforming to ``schema``.

    Row ids are array positions and are never reused. Removing a row
    tombstones it: the id goes to ``removed`` and its values are wiped.
    """

    schema: Schema
    values: np.ndarray
    removed: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[1] != len(self.schema):
            raise DataError(f"values must have shape (n, {len(self.schema)}), got {values.shape}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "removed", frozenset(int(r) for r in self.removed))

    @classmethod
    def from_rows(cls, schema: Schema, rows: Sequence[Sequence]) -> "Dataset":
        """Build from raw python rows (category labels or codes, numbers)."""
        if len(rows) == 0:
            raise DataError("no rows")
        out = np.empty((len(rows), len(schema)), dtype=np.float64)
        for i, row in enumerate(rows):
            if len(row) != len(schema):
                raise DataError(f"row {i}: expected {len(schema)} values, got {len(row)}")
            for j, (var, raw) in enumerate(zip(schema.variables, row)):
                out[i, j] = _convert(var, raw, i)
        return cls(schema, out)

    @classmethod
    def from_array(cls, schema: Schema, values) -> "Dataset":
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] == 0:
            raise DataError("no rows")
        ds = cls(schema, values)
        ds.check_domains()
        return ds

    def check_domains(self) -> None:
        live = self.row_ids
        for j, var in enumerate(self.schema.variables):
            col = self.values[live, j]
            bad = ~np.isfinite(col)
            if var.is_categorical:
                bad |= (col < 0) | (col >= len(var.categories)) | (col != np.round(col))
            else:
                bad |= (col < var.lo) | (col > var.hi)
            if bad.any():
                i = int(live[np.argmax(bad)])
                raise DataError(f"row {i}, variable {var.name!r}: value {col[np.argmax(bad)]} outside declared domain")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0] - len(self.removed)

    @cached_property
    def row_ids(self) -> np.ndarray:
        ids = np.arange(self.values.shape[0], dtype=np.int64)
        if self.removed:
            ids = ids[~np.isin(ids, np.fromiter(self.removed, dtype=np.int64))]
        ids.setflags(write=False)
        return ids

    def has_row(self, row_id: int) -> bool:
        return 0 <= row_id < self.values.shape[0] and row_id not in self.removed

    @cached_property
    def encoded(self) -> np.ndarray:
        """Clustering encoding: gaussian scaled to [0, 1] by declared bounds, categorical one-hot."""
        cols = []
        for j, var in enumerate(self.schema.variables):
            col = self.values[:, j]
            if var.is_categorical:
                codes = np.nan_to_num(col, nan=-1).astype(np.int64)
                cols.append((codes[:, None] == np.arange(len(var.categories))[None, :]).astype(np.float64))
            else:
                cols.append(((col - var.lo) / (var.hi - var.lo))[:, None])
        enc = np.hstack(cols)
        enc.setflags(write=False)
        return enc

    @cached_property
    def encoded_slices(self) -> tuple[slice, ...]:
        out, start = [], 0
        for var in self.schema.variables:
            out.append(slice(start, start + var.width))
            start += var.width
        return tuple(out)

    def without(self, row_id: int) -> "Dataset":
        """Copy with ``row_id`` tombstoned and its values erased."""
        if not self.has_row(row_id):
            raise DataError(f"row {row_id} is not in the dataset")
        values = self.values.copy()
        values[row_id, :] = np.nan
        ds = Dataset(self.schema, values, self.removed | {row_id})
        if "encoded" in self.__dict__:
            enc = self.encoded.copy()
            enc[row_id, :] = np.nan
            enc.setflags(write=False)
            ds.__dict__["encoded"] = enc
        return ds

    def subset(self, row_ids: Sequence[int]) -> "Dataset":
        """New dataset holding the given rows, renumbered 0..m-1 in the given order."""
        ids = np.asarray(row_ids, dtype=np.int64)
        if any(not self.has_row(int(r)) for r in ids):
            raise DataError("subset references a missing row")
        return Dataset(self.schema, self.values[ids])

    def full_view(self) -> "DataView":
        return DataView(self, self.row_ids, tuple(range(len(self.schema))))

    def view(self, row_ids, scope=None) -> "DataView":
        scope = tuple(range(len(self.schema))) if scope is None else tuple(scope)
        return DataView(self, np.asarray(row_ids, dtype=np.int64), scope)

    def label(self, var: int, value: float):
        v = self.schema[var]
        return v.categories[int(value)] if v.is_categorical else float(value)


def _convert(var: Variable, raw, row: int) -> float:
    if raw is None or (isinstance(raw, str) and raw.strip() == ""):
        raise DataError(f"row {row}, variable {var.name!r}: missing value")
    if var.is_categorical:
        label = raw.strip() if isinstance(raw, str) else raw
        if isinstance(label, str):
            try:
                return float(var.categories.index(label))
            except ValueError:
                raise DataError(f"row {row}, variable {var.name!r}: unknown category {label!r}") from None
        code = int(label)
        if code != label or not 0 <= code < len(var.categories):
            raise DataError(f"row {row}, variable {var.name!r}: unknown category code {label!r}")
        return float(code)
    try:
        x = float(raw)
    except (TypeError, ValueError):
        raise DataError(f"row {row}, variable {var.name!r}: cannot parse {raw!r} as a number") from None
    if not math.isfinite(x):
        raise DataError(f"row {row}, variable {var.name!r}: non-finite value {raw!r}")
    if not var.lo <= x <= var.hi:
        raise DataError(f"row {row}, variable {var.name!r}: value {x} outside [{var.lo}, {var.hi}]")
    return x


def load_csv(path: str | Path, schema: Schema, header: bool = False, delimiter: str = ",") -> Dataset:
    """Read a delimited file; row ids are assigned 0..n-1 in file order."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            records = [r for r in reader if r]
        except csv.Error as exc:
            raise DataError(f"{path}: line {reader.line_num}: {exc}") from exc
    if header and records:
        names = [c.strip() for c in records[0]]
        expected = [v.name for v in schema.variables]
        if names != expected:
            raise DataError(f"{path}: header {names} does not match schema {expected}")
        records = records[1:]
    if not records:
        raise DataError(f"{path}: no rows")
    return Dataset.from_rows(schema, records)


@dataclass(frozen=True, eq=False)
class DataView:
    """A subset of rows (ascending ids) and variables of one dataset."""

    dataset: Dataset
    row_ids: np.ndarray
    scope: tuple[int, ...]

    def __post_init__(self):
        ids = np.asarray(self.row_ids, dtype=np.int64)
        if ids.size > 1 and not np.all(ids[1:] > ids[:-1]):
            ids = np.unique(ids)
        object.__setattr__(self, "row_ids", ids)
        object.__setattr__(self, "scope", tuple(sorted(int(v) for v in self.scope)))

    def __len__(self) -> int:
        return int(self.row_ids.size)

    @property
    def schema(self) -> Schema:
        return self.dataset.schema

    def column(self, var: int) -> np.ndarray:
        return self.dataset.values[self.row_ids, var]

    def matrix(self) -> np.ndarray:
        return self.dataset.values[np.ix_(self.row_ids, self.scope)]

    def encoded(self) -> np.ndarray:
        """Clustering encoding of the rows restricted to this view's scope."""
        enc = self.dataset.encoded
        sl = self.dataset.encoded_slices
        cols = np.concatenate([np.arange(sl[v].start, sl[v].stop) for v in self.scope])
        return enc[np.ix_(self.row_ids, cols)]

    def with_scope(self, scope: Iterable[int]) -> "DataView":
        return DataView(self.dataset, self.row_ids, tuple(scope))

    def with_rows(self, row_ids) -> "DataView":
        return DataView(self.dataset, row_ids, self.scope)

    def contains(self, row_id: int) -> bool:
        i = np.searchsorted(self.row_ids, row_id)
        return bool(i < self.row_ids.size and self.row_ids[i] == row_id)

    def same_as(self, other: "DataView") -> bool:
        return (
            self.dataset is other.dataset
            and self.scope == other.scope
            and np.array_equal(self.row_ids, other.row_ids)
        )


def restrict(view: DataView, drop_rows: Iterable[int] = (), keep_scope: Iterable[int] | None = None) -> DataView:
    """Drop rows and narrow the scope, returning a new view."""
    drop = np.fromiter((int(r) for r in drop_rows), dtype=np.int64)
    if drop.size and not np.all(np.isin(drop, view.row_ids)):
        raise DataError("drop_rows must be a subset of the view's rows")
    scope = view.scope if keep_scope is None else tuple(keep_scope)
    if not set(scope) <= set(view.scope):
        raise DataError("keep_scope must be a subset of the view's scope")
    rows = view.row_ids[~np.isin(view.row_ids, drop)] if drop.size else view.row_ids
    if rows.size == 0:
        raise DataError("restriction leaves no rows")
    if not scope:
        raise DataError("restriction leaves an empty scope")
    return DataView(view.dataset, rows, scope)


def is_uninformative(view: DataView, var: int) -> bool:
    """True iff the column is constant over the view (zero variance, tested as exact equality)."""
    if var not in view.scope:
        raise DataError(f"variable {var} is not in the view's scope")
    if len(view) == 0:
        raise DataError("undefined variance: empty view")
    col = view.column(var)
    return bool(np.all(col == col[0]))


def uninformative_variables(view: DataView) -> tuple[int, ...]:
    if len(view) == 0:
        raise DataError("undefined variance: empty view")
    m = view.matrix()
    const = np.all(m == m[0], axis=0)
    return tuple(v for v, c in zip(view.scope, const) if c)
