"""hybridqe: a hybrid relational/vector query engine.

Executes top-k, distance-range, and windowed per-partition top-k queries
that mix structured predicates with vector similarity, using semantic plan
rewriting and HNSW-backed physical operators.
"""

from .data import Metric, Schema, Table, distance, load_table, quantile
from .errors import HybridQEError

__all__ = [
    "Metric",
    "Schema",
    "Table",
    "distance",
    "load_table",
    "quantile",
    "HybridQEError",
]

__version__ = "0.1.0"
