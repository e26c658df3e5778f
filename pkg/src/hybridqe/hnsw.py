"""HNSW proximity-graph index with three access paths.

Access paths:
  * ``search_topk``    -- batch top-k (beam search at the base layer)
  * ``topk_cursor``    -- incremental candidate stream without a fixed k;
    emissions trend upward in distance but are not strictly sorted
    (relaxed monotonicity), and a drained cursor emits every row exactly once
  * ``range_cursor``   -- radius search that walks the candidate stream and
    terminates after ``miss_limit`` consecutive out-of-range probes once the
    range has been entered

Construction follows the standard layered insert with a diversity-aware
neighbor selection heuristic. Level assignment is geometric with
normalization 1/ln(M) and a seeded generator, so builds are reproducible.
All tie-breaks are by row id ascending.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .data import Metric, Table, distance_batch
from .errors import DimensionError, EmptyInputError


@dataclass(frozen=True)
class HnswParams:
    m: int = 16
    ef_construction: int = 200
    ef_search: int = 48
    seed: int = 0

    @property
    def m0(self) -> int:
        return 2 * self.m

    @property
    def level_norm(self) -> float:
        return 1.0 / math.log(self.m)


class _LayerGraph:
    """Fixed-capacity adjacency rows: ids (n, cap) int32 plus counts (n,)."""

    def __init__(self, n: int, cap: int):
        self.cap = cap
        self.ids = np.full((n, cap), -1, dtype=np.int32)
        self.counts = np.zeros(n, dtype=np.int32)

    def neighbors(self, node: int) -> np.ndarray:
        return self.ids[node, : self.counts[node]]

    def neighbors_of_many(self, nodes: np.ndarray) -> np.ndarray:
        rows = self.ids[nodes]
        mask = np.arange(self.cap) < self.counts[nodes][:, None]
        return rows[mask]

    def set_neighbors(self, node: int, neigh: np.ndarray) -> None:
        k = len(neigh)
        self.ids[node, :k] = neigh
        self.counts[node] = k

    def append(self, node: int, other: int) -> bool:
        c = self.counts[node]
        if c < self.cap:
            self.ids[node, c] = other
            self.counts[node] = c + 1
            return True
        return False


class HnswIndex:
    def __init__(self, vectors: np.ndarray, metric: Metric, params: HnswParams,
                 levels: np.ndarray, layers: list[_LayerGraph], entry_point: int):
        self.vectors = vectors
        self.metric = metric
        self.params = params
        self.levels = levels
        self.layers = layers  # layers[0] is the base layer holding all nodes
        self.entry_point = entry_point

    @property
    def size(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def max_level(self) -> int:
        return len(self.layers) - 1

    def _check_query(self, q: np.ndarray) -> np.ndarray:
        q = np.asarray(q, dtype=np.float32)
        if q.shape != (self.dim,):
            raise DimensionError(f"query dim {q.shape} does not match index dim {self.dim}")
        return q

    def _descend(self, q: np.ndarray, to_level: int) -> tuple[int, float]:
        """Greedy walk from the entry point down to `to_level` (exclusive stop)."""
        ep = self.entry_point
        ep_d = float(distance_batch(self.metric, self.vectors[ep:ep + 1], q)[0])
        for level in range(self.max_level, to_level, -1):
            ep, ep_d = self._greedy(q, ep, ep_d, level)
        return ep, ep_d

    def _greedy(self, q: np.ndarray, ep: int, ep_d: float, level: int) -> tuple[int, float]:
        layer = self.layers[level]
        while True:
            neigh = layer.neighbors(ep)
            if neigh.size == 0:
                return ep, ep_d
            d = distance_batch(self.metric, self.vectors[neigh], q)
            order = np.lexsort((neigh, d))
            best = order[0]
            if d[best] < ep_d:
                ep, ep_d = int(neigh[best]), float(d[best])
            else:
                return ep, ep_d

    def _search_layer(self, q: np.ndarray, entry: int, entry_d: float,
                      ef: int, level: int) -> tuple[np.ndarray, np.ndarray]:
        """Beam search on one layer; returns ids and distances sorted ascending.

        Expands every not-yet-expanded beam member per round; the beam keeps
        the ef closest discovered nodes. Equivalent in spirit to the classic
        candidate-heap search but vectorized over whole expansion rounds.
        """
        layer = self.layers[level]
        visited = np.zeros(self.size, dtype=bool)
        expanded = np.zeros(self.size, dtype=bool)
        visited[entry] = True
        beam_ids = np.array([entry], dtype=np.int64)
        beam_d = np.array([entry_d], dtype=np.float64)
        while True:
            unexp = beam_ids[~expanded[beam_ids]]
            if unexp.size == 0:
                break
            expanded[unexp] = True
            neigh = layer.neighbors_of_many(unexp).astype(np.int64)
            if neigh.size:
                neigh = neigh[~visited[neigh]]
            if neigh.size:
                neigh = np.unique(neigh)
                visited[neigh] = True
                d = distance_batch(self.metric, self.vectors[neigh], q)
                beam_ids = np.concatenate([beam_ids, neigh])
                beam_d = np.concatenate([beam_d, d])
                order = np.lexsort((beam_ids, beam_d))[:ef]
                beam_ids = beam_ids[order]
                beam_d = beam_d[order]
        order = np.lexsort((beam_ids, beam_d))
        return beam_ids[order], beam_d[order]

    # -- public access paths ------------------------------------------------

    def search_topk(self, q: np.ndarray, k: int) -> list[tuple[int, float]]:
        """k nearest candidates, ascending by (distance, row id)."""
        if k < 0:
            raise ValueError("k must be >= 0")
        q = self._check_query(q)
        if k == 0 or self.size == 0:
            return []
        ep, ep_d = self._descend(q, 0)
        ef = max(self.params.ef_search, k)
        ids, dists = self._search_layer(q, ep, ep_d, ef, 0)
        return [(int(i), float(d)) for i, d in zip(ids[:k], dists[:k])]

    def topk_cursor(self, q: np.ndarray) -> "TopkCursor":
        return TopkCursor(self, self._check_query(q))

    def range_cursor(self, q: np.ndarray, radius: float, miss_limit: int) -> "RangeCursor":
        return RangeCursor(self, self._check_query(q), radius, miss_limit)


class TopkCursor:
    """Incremental nearest-candidate stream over the base layer.

    Starts from the greedy entry point and pops the closest frontier node,
    expanding its neighbors. Expansion breadth is initially pruned to the
    ef_search closest discoveries (pruned nodes are deferred, not dropped);
    when the pruned frontier drains, traversal continues over the deferred
    pool, and finally over any unreached rows, so a fully drained cursor
    emits each row id exactly once.
    """

    def __init__(self, index: HnswIndex, q: np.ndarray):
        self.index = index
        self.q = q
        n = index.size
        self._visited = np.zeros(n, dtype=bool)
        self._frontier: list[tuple[float, int]] = []
        self._deferred: list[tuple[float, int]] = []
        self._bound: list[float] = []  # max-heap (negated) of best ef discoveries
        self._ef = max(1, index.params.ef_search)
        self._relaxed = False
        self.emitted = 0
        if n:
            ep, ep_d = index._descend(q, 0)
            self._visited[ep] = True
            self._note_discovery(ep_d)
            heapq.heappush(self._frontier, (ep_d, ep))

    def _note_discovery(self, d: float) -> float | None:
        if len(self._bound) < self._ef:
            heapq.heappush(self._bound, -d)
        elif -self._bound[0] > d:
            heapq.heapreplace(self._bound, -d)
        return None if len(self._bound) < self._ef else -self._bound[0]

    def _expand(self, node: int) -> None:
        layer = self.index.layers[0]
        neigh = layer.neighbors(node).astype(np.int64)
        if neigh.size:
            neigh = neigh[~self._visited[neigh]]
        if neigh.size == 0:
            return
        self._visited[neigh] = True
        dists = distance_batch(self.index.metric, self.index.vectors[neigh], self.q)
        for j, dj in zip(neigh.tolist(), dists.tolist()):
            bound = self._note_discovery(dj)
            if self._relaxed or bound is None or dj <= bound:
                heapq.heappush(self._frontier, (dj, j))
            else:
                heapq.heappush(self._deferred, (dj, j))

    def next(self) -> tuple[int, float] | None:
        """Next candidate as (row id, distance), or None when exhausted."""
        while True:
            if self._frontier:
                d, node = heapq.heappop(self._frontier)
                self._expand(node)
                self.emitted += 1
                return node, d
            if self._deferred:
                self._frontier = self._deferred
                self._deferred = []
                heapq.heapify(self._frontier)
                self._relaxed = True
                continue
            remaining = np.nonzero(~self._visited)[0]
            if remaining.size == 0:
                return None
            # disconnected or pruned-away rows: feed them through in bulk
            self._visited[remaining] = True
            dists = distance_batch(self.index.metric, self.index.vectors[remaining], self.q)
            self._frontier = list(zip(dists.tolist(), remaining.tolist()))
            heapq.heapify(self._frontier)
            self._relaxed = True


class RangeGate:
    """Per-probe admission logic for range scans.

    Probes with distance <= radius are emitted and mark the scan as having
    entered the range (resetting the miss run). Out-of-range probes before
    entry are the convergence phase and never terminate; after entry, a run
    of `miss_limit` consecutive out-of-range probes stops the scan.
    """

    def __init__(self, radius: float, miss_limit: int):
        if miss_limit < 1:
            raise ValueError("miss_limit must be >= 1")
        self.radius = radius
        self.miss_limit = miss_limit
        self.has_entered = False
        self.consecutive_misses = 0
        self.stopped = False

    def observe(self, dist: float) -> str:
        """Classify one probe: 'emit', 'skip', or 'stop'."""
        if self.stopped:
            return "stop"
        if dist <= self.radius:
            self.has_entered = True
            self.consecutive_misses = 0
            return "emit"
        if self.has_entered:
            self.consecutive_misses += 1
            if self.consecutive_misses >= self.miss_limit:
                self.stopped = True
                return "stop"
        return "skip"


class RangeCursor:
    """Radius scan over the incremental candidate stream (gated traversal)."""

    def __init__(self, index: HnswIndex, q: np.ndarray, radius: float, miss_limit: int):
        if not (radius == math.inf or math.isfinite(radius)):
            raise ValueError("radius must be finite or +inf")
        self._cursor = index.topk_cursor(q)
        self.gate = RangeGate(radius, miss_limit)
        self.probes = 0
        self.emitted = 0
        self._done = False

    def next_in_range(self, before_probe=None) -> tuple[int, float] | None:
        """Next (row id, distance) with distance <= radius, or None.

        `before_probe`, when given, is called before every advance of the
        underlying traversal; returning True terminates the scan (the hook
        carries external early-stop state, e.g. per-category progress).
        """
        if self._done:
            return None
        while True:
            if before_probe is not None and before_probe():
                self._done = True
                return None
            item = self._cursor.next()
            if item is None:
                self._done = True
                return None
            self.probes += 1
            verdict = self.gate.observe(item[1])
            if verdict == "emit":
                self.emitted += 1
                return item
            if verdict == "stop":
                self._done = True
                return None


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------

def build_index(table: Table, vector_column: str, params: HnswParams | None = None,
                metric: Metric = Metric.L2) -> HnswIndex:
    """Build an index over every row of `table`'s vector column."""
    params = params or HnswParams()
    if not table.schema.has_column(vector_column):
        raise KeyError(vector_column)
    vectors = table.columns[vector_column]
    if table.row_count < 1:
        raise EmptyInputError("cannot index an empty table")
    return build_index_from_vectors(np.ascontiguousarray(vectors, dtype=np.float32),
                                    params=params, metric=metric)


def build_index_from_vectors(vectors: np.ndarray, params: HnswParams | None = None,
                             metric: Metric = Metric.L2) -> HnswIndex:
    params = params or HnswParams()
    n = vectors.shape[0]
    if n < 1:
        raise EmptyInputError("cannot index zero vectors")
    rng = np.random.Generator(np.random.PCG64(params.seed))
    uniform = rng.random(n)
    levels = np.floor(-np.log(uniform) * params.level_norm).astype(np.int64)

    builder = _Builder(vectors, metric, params, levels)
    for i in range(n):
        builder.insert(i)
    return HnswIndex(vectors, metric, params, levels, builder.layers, builder.entry_point)


class _Builder:
    def __init__(self, vectors, metric, params, levels):
        self.vectors = vectors
        self.metric = metric
        self.params = params
        self.levels = levels
        n = vectors.shape[0]
        self.layers: list[_LayerGraph] = [_LayerGraph(n, params.m0)]
        self.entry_point = -1
        self.entry_level = -1

    def _ensure_layers(self, level: int) -> None:
        n = self.vectors.shape[0]
        while len(self.layers) <= level:
            self.layers.append(_LayerGraph(n, self.params.m))

    def insert(self, node: int) -> None:
        level = int(self.levels[node])
        self._ensure_layers(level)
        q = self.vectors[node]
        if self.entry_point < 0:
            self.entry_point = node
            self.entry_level = level
            return

        index_view = HnswIndex(self.vectors, self.metric, self.params,
                               self.levels, self.layers, self.entry_point)
        ep = self.entry_point
        ep_d = float(distance_batch(self.metric, self.vectors[ep:ep + 1], q)[0])
        for lev in range(self.entry_level, level, -1):
            ep, ep_d = index_view._greedy(q, ep, ep_d, lev)

        for lev in range(min(level, self.entry_level), -1, -1):
            cand_ids, cand_d = index_view._search_layer(q, ep, ep_d, self.params.ef_construction, lev)
            m_target = self.params.m
            chosen = self._select_neighbors(cand_ids, cand_d, m_target)
            layer = self.layers[lev]
            cap = layer.cap
            layer.set_neighbors(node, chosen.astype(np.int32))
            for j in chosen.tolist():
                if not layer.append(j, node):
                    self._prune(lev, j, node)
            ep, ep_d = int(cand_ids[0]), float(cand_d[0])

        if level > self.entry_level:
            self.entry_point = node
            self.entry_level = level

    def _select_neighbors(self, cand_ids: np.ndarray, cand_d: np.ndarray,
                          m: int) -> np.ndarray:
        """Diversity-aware selection: keep a candidate only if it is closer to
        the query than to every already-kept neighbor; backfill from the
        discarded pool in distance order. Candidates arrive sorted ascending."""
        size = cand_ids.size
        if size <= m:
            return cand_ids
        cand_vecs = self.vectors[cand_ids]
        eligible = np.ones(size, dtype=bool)
        keep = np.zeros(size, dtype=bool)
        kept = 0
        for idx in range(size):
            if kept == m:
                break
            if not eligible[idx]:
                continue
            keep[idx] = True
            kept += 1
            # eliminate candidates that sit closer to this neighbor than to q
            to_kept = distance_batch(self.metric, cand_vecs, cand_vecs[idx])
            eligible &= to_kept > cand_d
        if kept < m:
            backfill = np.nonzero(~keep)[0][: m - kept]
            keep[backfill] = True
        return cand_ids[keep]

    def _prune(self, level: int, node: int, incoming: int) -> None:
        """Re-select `node`'s neighbor list after an overflowing back-link."""
        layer = self.layers[level]
        cands = np.concatenate([layer.neighbors(node).astype(np.int64), [incoming]])
        d = distance_batch(self.metric, self.vectors[cands], self.vectors[node])
        order = np.lexsort((cands, d))
        cands, d = cands[order], d[order]
        chosen = self._select_neighbors(cands, d, layer.cap)
        layer.set_neighbors(node, chosen.astype(np.int32))
