"""Seed acquisition and routing over a built graph."""

from __future__ import annotations

import threading
import zlib
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import VectorSet
from .graph import Graph
from .validation import ContractError, check_vector


@dataclass(frozen=True)
class SeedStrategy:
    """Where routing starts.

    ``random`` draws ``count`` distinct ids from ``seed``; with ``per_query``
    the draw is additionally keyed on the query bytes, so every query gets
    its own (reproducible) entry points.
    """

    kind: str = "random"
    count: int = 1
    seed: int = 0
    fixed_ids: tuple = ()
    per_query: bool = False

    def __post_init__(self):
        if self.kind not in ("random", "centroid", "fixed"):
            raise ContractError(f"unknown seed strategy {self.kind!r}")
        if self.count < 1:
            raise ContractError("seed count must be >= 1")
        if self.kind == "fixed" and not self.fixed_ids:
            raise ContractError("fixed seeds need at least one id")
        object.__setattr__(self, "fixed_ids", tuple(int(i) for i in self.fixed_ids))


@dataclass
class SearchTrace:
    ndc: int = 0
    hops: int = 0
    c: int = 0


def centroid_vertex(base: VectorSet) -> int:
    """The vertex nearest the dataset mean (smallest id on ties)."""
    mean = base.data.mean(axis=0, dtype=np.float64).astype(np.float32)
    d = _kernels.l2_to_rows(base.data, np.arange(base.count), mean)
    return int(np.argmin(d))


def acquire_seeds(g: Graph, base: VectorSet, strategy: SeedStrategy, query=None) -> np.ndarray:
    n = g.vertex_count
    if n == 0:
        raise ContractError("empty graph")
    if strategy.kind == "fixed":
        ids = np.asarray(strategy.fixed_ids, dtype=np.int32)
        if ids.min() < 0 or ids.max() >= n:
            raise ContractError("fixed seed id out of range")
        return ids
    if strategy.kind == "centroid":
        return np.array([centroid_vertex(base)], dtype=np.int32)
    seed = strategy.seed
    if strategy.per_query and query is not None:
        q = np.ascontiguousarray(query, dtype=np.float32)
        seed = (seed << 32) ^ zlib.crc32(q.tobytes())
    rng = np.random.default_rng(seed)
    return rng.choice(n, size=min(strategy.count, n), replace=False).astype(np.int32)


def _dedup(seeds):
    seeds = np.asarray(seeds, dtype=np.int32)
    if seeds.size == 0:
        raise ContractError("seed list is empty")
    _, first = np.unique(seeds, return_index=True)
    return seeds[np.sort(first)]


def _prepare(g, base, q, seeds):
    if g.vertex_count != base.count:
        raise ContractError("graph and dataset sizes differ")
    q = check_vector(q, base.dim)
    seeds = _dedup(seeds)
    if seeds.min() < 0 or seeds.max() >= g.vertex_count:
        raise ContractError("seed id out of range")
    return q, seeds


class _Scratch:
    """Per-thread visited/expanded stamps, reused across queries."""

    def __init__(self):
        self.n = -1
        self.stamp = 0

    def get(self, n):
        if n != self.n or self.stamp >= 2**31 - 2:
            self.visited = np.zeros(n, dtype=np.int32)
            self.expanded = np.zeros(n, dtype=np.int32)
            self.n, self.stamp = n, 0
        self.stamp += 1
        return self.visited, self.expanded, self.stamp


_local = threading.local()


def _scratch(n):
    if not hasattr(_local, "s"):
        _local.s = _Scratch()
    return _local.s.get(n)


def _route(g, base, q, c, seeds, k, *, guided=False, max_hops=-1, backtrack=0,
           seed_d=None, scratch=None):
    if not (c >= k >= 1):
        raise ContractError(f"need c >= k >= 1, got c={c}, k={k}")
    visited, expanded, stamp = scratch or _scratch(g.vertex_count)
    if seed_d is None:
        seed_d = np.full(seeds.size, np.nan, dtype=np.float32)
    ids, ds, ndc, hops = _kernels.best_first(
        g.indptr, g.indices, base.data, q, int(c), seeds, seed_d,
        guided, int(max_hops), int(backtrack), visited, expanded, stamp,
    )
    return ids, ds, SearchTrace(ndc=int(ndc), hops=int(hops), c=int(c))


def best_first_search(g: Graph, base: VectorSet, q, c: int, seeds, k: int):
    """Greedy best-first routing with a candidate pool of capacity ``c``.

    Returns ``(ids, trace)`` where ``ids`` are the ``k`` nearest vertices
    found, ordered by (distance, id).
    """
    q, seeds = _prepare(g, base, q, seeds)
    ids, _, trace = _route(g, base, q, c, seeds, k)
    return ids[:k], trace


def guided_search(g: Graph, base: VectorSet, q, c: int, seeds, k: int):
    """Best-first routing that only evaluates neighbors lying toward ``q``.

    On expanding x, let j be the coordinate where |q - x| is largest.  A
    neighbor is evaluated if it is x's nearest neighbor or if it sits on
    the same side of x as q along coordinate j.
    """
    q, seeds = _prepare(g, base, q, seeds)
    ids, _, trace = _route(g, base, q, c, seeds, k, guided=True)
    return ids[:k], trace


def backtrack_search(g: Graph, base: VectorSet, q, c: int, seeds, k: int, budget: int = 10):
    """Best-first routing followed by up to ``budget`` backtracking expansions.

    After convergence the search returns to the second-closest expanded
    vertex (then the next, and so on) and expands those of its neighbors
    that were evaluated but never expanded, resuming best-first routing after
    each one.  The explored set only grows, so results never get worse.
    """
    if budget < 0:
        raise ContractError("backtrack budget must be >= 0")
    q, seeds = _prepare(g, base, q, seeds)
    ids, _, trace = _route(g, base, q, c, seeds, k, backtrack=budget)
    return ids[:k], trace


def two_stage_search(g: Graph, base: VectorSet, q, c: int, seeds, k: int, stage1_hops: int = 64):
    """Guided routing for ``stage1_hops`` expansions, then best-first from its pool."""
    if stage1_hops < 0:
        raise ContractError("stage-1 hop budget must be >= 0")
    q, seeds = _prepare(g, base, q, seeds)
    scratch = _scratch(g.vertex_count)
    ids1, ds1, t1 = _route(g, base, q, c, seeds, k, guided=True, max_hops=stage1_hops,
                           scratch=scratch)
    ids2, _, t2 = _route(g, base, q, c, ids1, k, seed_d=ds1, scratch=scratch)
    return ids2[:k], SearchTrace(ndc=t1.ndc + t2.ndc, hops=t1.hops + t2.hops, c=int(c))


def range_search(g: Graph, base: VectorSet, q, epsilon: float, seeds, k: int):
    """Routing without a pool bound; admits neighbors within (1+epsilon) r.

    ``r`` is the distance of the current k-th best result (infinite until
    ``k`` results exist).  Stops once the nearest unexpanded candidate lies
    beyond (1+epsilon) r.
    """
    if epsilon < 0:
        raise ContractError("epsilon must be >= 0")
    if k < 1:
        raise ContractError("k must be >= 1")
    q, seeds = _prepare(g, base, q, seeds)
    visited, _, stamp = _scratch(g.vertex_count)
    ids, _, ndc, hops = _kernels.range_route(
        g.indptr, g.indices, base.data, q, int(k), float(epsilon), seeds, visited, stamp
    )
    return ids, SearchTrace(ndc=int(ndc), hops=int(hops), c=0)


def linear_scan(g: Graph, base: VectorSet, q, k: int):
    """Exhaustive baseline: evaluates every vertex."""
    q = check_vector(q, base.dim)
    d = _kernels.l2_to_rows(base.data, np.arange(base.count), q)
    order = np.lexsort((np.arange(base.count), d))[:k]
    return order.astype(np.int32), SearchTrace(ndc=base.count, hops=0, c=base.count)
