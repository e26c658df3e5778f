"""Core data model: vectors, typed columns, tables, distance metrics, quantiles.

Vectors are float32 numpy arrays; distance accumulation happens in float64.
The distance convention is smaller-is-closer for both metrics: inner-product
similarity s is stored as the distance -s, so range tests and sort orders
share one comparator.
"""
from __future__ import annotations

import struct
import threading
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DimensionError,
    EmptyInputError,
    ParseError,
    TypeMismatchError,
)


class Metric(Enum):
    L2 = "l2"
    INNER_PRODUCT = "ip"


class DistanceCounter:
    """Global instrumentation counter for similarity computations.

    Incremented by every distance evaluation, including batched ones
    (a batch of n pairs counts n). Execution stats snapshot it around
    pipeline runs and individual sink phases.
    """

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._value = 0

    def add(self, n: int = 1) -> None:
        with self._lock:
            self._value += n

    def reset(self) -> None:
        with self._lock:
            self._value = 0

    @property
    def value(self) -> int:
        return self._value


DISTANCE_CALLS = DistanceCounter()


def as_vector(components: Sequence[float] | np.ndarray, dim: int | None = None) -> np.ndarray:
    """Validate and convert to a float32 vector."""
    vec = np.asarray(components, dtype=np.float32)
    if vec.ndim != 1:
        raise DimensionError(f"expected a 1-d vector, got shape {vec.shape}")
    if dim is not None and vec.shape[0] != dim:
        raise DimensionError(f"expected dim {dim}, got {vec.shape[0]}")
    if not np.all(np.isfinite(vec)):
        raise ValueError("vector components must be finite")
    return vec


def distance(metric: Metric, a: np.ndarray, b: np.ndarray) -> float:
    """Distance between two vectors under the smaller-is-closer convention.

    L2 returns the Euclidean norm of a-b; inner product returns -<a,b>.
    Counts one call on the global instrumentation counter.
    """
    if a.shape != b.shape:
        raise DimensionError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    DISTANCE_CALLS.add(1)
    a64 = a.astype(np.float64, copy=False)
    b64 = b.astype(np.float64, copy=False)
    if metric is Metric.L2:
        d = a64 - b64
        return float(np.sqrt(np.dot(d, d)))
    return float(-np.dot(a64, b64))


def distance_batch(metric: Metric, mat: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Distances from every row of `mat` to `q`; counts len(mat) calls."""
    if mat.ndim != 2 or mat.shape[1] != q.shape[0]:
        raise DimensionError(f"dimension mismatch: {mat.shape} vs {q.shape[0]}")
    DISTANCE_CALLS.add(mat.shape[0])
    mat64 = mat.astype(np.float64, copy=False)
    q64 = q.astype(np.float64, copy=False)
    if metric is Metric.L2:
        d = mat64 - q64
        return np.sqrt(np.einsum("ij,ij->i", d, d))
    return -(mat64 @ q64)


# ---------------------------------------------------------------------------
# Schemas and tables
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ColumnType:
    kind: str  # int64 | float64 | text | vector
    dim: int = 0

    def __str__(self) -> str:
        if self.kind == "vector":
            return f"vector({self.dim})"
        return self.kind


INT64 = ColumnType("int64")
FLOAT64 = ColumnType("float64")
TEXT = ColumnType("text")


def vector_type(dim: int) -> ColumnType:
    return ColumnType("vector", dim)


def parse_column_type(text: str) -> ColumnType:
    text = text.strip()
    if text in ("int64", "float64", "text"):
        return ColumnType(text)
    if text.startswith("vector(") and text.endswith(")"):
        return vector_type(int(text[len("vector("):-1]))
    raise ParseError(f"unknown column type {text!r}")


@dataclass(frozen=True)
class Schema:
    """Ordered column list plus the primary key column.

    At most one vector column per table; the primary key must be int64.
    """

    columns: tuple[tuple[str, ColumnType], ...]
    primary_key: str

    def __post_init__(self):
        names = [n for n, _ in self.columns]
        if len(set(names)) != len(names):
            raise ValueError("duplicate column names")
        vecs = [n for n, t in self.columns if t.kind == "vector"]
        if len(vecs) > 1:
            raise ValueError("at most one vector column per table")
        if self.primary_key not in names:
            raise ValueError(f"primary key {self.primary_key!r} not a column")
        if self.column_type(self.primary_key).kind != "int64":
            raise ValueError("primary key must be an int64 column")

    def column_type(self, name: str) -> ColumnType:
        for n, t in self.columns:
            if n == name:
                return t
        raise KeyError(name)

    def has_column(self, name: str) -> bool:
        return any(n == name for n, _ in self.columns)

    @property
    def vector_column(self) -> str | None:
        for n, t in self.columns:
            if t.kind == "vector":
                return n
        return None

    def header(self) -> str:
        return ",".join(f"{n}:{t}" for n, t in self.columns)

    @staticmethod
    def parse_header(line: str, primary_key: str | None = None) -> "Schema":
        cols = []
        for part in line.strip().split(","):
            if ":" not in part:
                raise ParseError(f"malformed header field {part!r}")
            name, tyname = part.split(":", 1)
            cols.append((name.strip(), parse_column_type(tyname)))
        if primary_key is None:
            primary_key = cols[0][0]
        return Schema(tuple(cols), primary_key)


@dataclass
class Table:
    """Columnar store: scalar columns as numpy arrays / text lists, the
    vector column as one (rows, dim) float32 matrix."""

    schema: Schema
    columns: dict
    row_count: int

    def __post_init__(self):
        for name, ctype in self.schema.columns:
            col = self.columns[name]
            if len(col) != self.row_count:
                raise ValueError(f"column {name!r} has {len(col)} rows, expected {self.row_count}")
            if ctype.kind == "vector" and self.row_count and col.shape[1] != ctype.dim:
                raise DimensionError(f"vector column {name!r} has dim {col.shape[1]}, declared {ctype.dim}")
        pk = self.columns[self.schema.primary_key]
        if self.row_count and len(np.unique(pk)) != self.row_count:
            raise ValueError("primary key values must be unique")

    def column(self, name: str):
        return self.columns[name]

    def vectors(self) -> np.ndarray | None:
        name = self.schema.vector_column
        return None if name is None else self.columns[name]

    def value(self, name: str, row: int):
        col = self.columns[name]
        v = col[row]
        if isinstance(v, np.generic):
            return v.item()
        return v


def empty_columns(schema: Schema, n: int) -> dict:
    cols = {}
    for name, ctype in schema.columns:
        if ctype.kind == "int64":
            cols[name] = np.zeros(n, dtype=np.int64)
        elif ctype.kind == "float64":
            cols[name] = np.zeros(n, dtype=np.float64)
        elif ctype.kind == "text":
            cols[name] = [""] * n
        else:
            cols[name] = np.zeros((n, ctype.dim), dtype=np.float32)
    return cols


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------
# Text format: first line `name:type,...`, then one CSV row per tuple.
# Vector literals use `;` separators inside brackets: [0.5;-1.25;...].

def _format_value(ctype: ColumnType, v) -> str:
    if ctype.kind == "int64":
        return str(int(v))
    if ctype.kind == "float64":
        return repr(float(v))
    if ctype.kind == "text":
        return str(v)
    return "[" + ";".join(repr(float(x)) for x in v) + "]"


def _parse_value(ctype: ColumnType, text: str, row: int):
    try:
        if ctype.kind == "int64":
            return int(text)
        if ctype.kind == "float64":
            return float(text)
        if ctype.kind == "text":
            return text
        if not (text.startswith("[") and text.endswith("]")):
            raise ValueError("vector literal must be bracketed")
        body = text[1:-1]
        parts = [p for p in body.split(";") if p] if body else []
        vec = np.array([float(p) for p in parts], dtype=np.float32)
        if vec.shape[0] != ctype.dim:
            raise DimensionError(f"vector has dim {vec.shape[0]}, declared {ctype.dim}")
        return vec
    except DimensionError:
        raise
    except ValueError as exc:
        raise ParseError(f"bad {ctype} literal {text!r}: {exc}", row=row) from exc


def write_table(table: Table, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(table.schema.header() + "\n")
        for i in range(table.row_count):
            fields = [
                _format_value(ctype, table.columns[name][i])
                for name, ctype in table.schema.columns
            ]
            fh.write(",".join(fields) + "\n")


def load_table(path, schema: Schema) -> Table:
    """Load a table file, validating it against the expected schema."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        if not header:
            raise ParseError("empty file: missing header")
        file_schema = Schema.parse_header(header, primary_key=schema.primary_key)
        if file_schema.columns != schema.columns:
            raise ParseError(
                f"header mismatch: file has {file_schema.header()!r}, expected {schema.header()!r}"
            )
        rows = []
        for idx, line in enumerate(fh):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = _split_row(line, schema, idx)
            rows.append([_parse_value(t, f, idx) for (_, t), f in zip(schema.columns, fields)])
    n = len(rows)
    cols = empty_columns(schema, n)
    for i, row in enumerate(rows):
        for (name, ctype), v in zip(schema.columns, row):
            cols[name][i] = v
    return Table(schema, cols, n)


def _split_row(line: str, schema: Schema, row: int) -> list[str]:
    # Vector literals contain no commas (`;` separators), so a plain split
    # is unambiguous as long as the field count matches.
    fields = line.split(",")
    if len(fields) != len(schema.columns):
        raise ParseError(
            f"expected {len(schema.columns)} fields, got {len(fields)}", row=row
        )
    return fields


def write_vectors_binary(vectors: np.ndarray, path) -> None:
    """Raw vector file: little-endian u32 count, u32 dim, then count*dim f32."""
    vecs = np.ascontiguousarray(vectors, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<II", vecs.shape[0], vecs.shape[1] if vecs.size else 0))
        fh.write(vecs.tobytes())


def read_vectors_binary(path) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(8)
        if len(head) != 8:
            raise ParseError("truncated vector file header")
        count, dim = struct.unpack("<II", head)
        data = np.frombuffer(fh.read(count * dim * 4), dtype="<f4")
    if data.size != count * dim:
        raise ParseError("truncated vector file body")
    return data.reshape(count, dim).astype(np.float32)


# ---------------------------------------------------------------------------
# Scalar comparisons and quantiles
# ---------------------------------------------------------------------------

_NUMERIC = (int, float)


def compare_values(op: str, a, b) -> bool:
    """Typed comparison; no silent coercion between text and numbers.

    Comparisons involving null are false. int64/float64 inter-compare as
    numbers; text compares lexicographically with text only.
    """
    if a is None or b is None:
        return False
    a_num = isinstance(a, _NUMERIC) and not isinstance(a, bool)
    b_num = isinstance(b, _NUMERIC) and not isinstance(b, bool)
    if a_num != b_num:
        raise TypeMismatchError(f"cannot compare {type(a).__name__} with {type(b).__name__}")
    if not a_num and (not isinstance(a, str) or not isinstance(b, str)):
        raise TypeMismatchError(f"cannot compare {type(a).__name__} with {type(b).__name__}")
    if op == "=":
        return a == b
    if op == "<>":
        return a != b
    if op == "<":
        return a < b
    if op == "<=":
        return a <= b
    if op == ">":
        return a > b
    raise ValueError(f"unknown comparison operator {op!r}")


def quantile(values: Iterable[float], q: float) -> float:
    """Nearest-rank quantile: the value below which at most a fraction q of
    the inputs fall strictly."""
    vals = np.sort(np.asarray(list(values), dtype=np.float64))
    if vals.size == 0:
        raise EmptyInputError("quantile of empty input")
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"quantile fraction must be in [0,1], got {q}")
    rank = max(1, int(np.ceil(q * vals.size)))
    return float(vals[rank - 1])
