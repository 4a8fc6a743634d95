"""Index-construction components: initialization, candidate acquisition,
neighbor selection, connectivity repair and path adjustment."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import VectorSet
from .graph import Graph
from .search import _route, _scratch
from .validation import ContractError

SELECTION_KINDS = ("distance_topk", "rng_alpha", "angle_threshold", "dpg_anglesum", "mst")
CANDIDATE_STRATEGIES = ("neighbors", "expansion", "search")


@dataclass(frozen=True)
class NNDescentParams:
    K: int = 20
    L: int = 40
    iter: int = 8
    sample: int = 10
    reverse: int = 20
    seed: int = 0

    def __post_init__(self):
        if not (self.L >= self.K >= 1):
            raise ContractError("NN-Descent needs L >= K >= 1")
        if self.iter < 0 or self.sample < 1 or self.reverse < 0:
            raise ContractError("NN-Descent needs iter >= 0, sample >= 1, reverse >= 0")


@dataclass(frozen=True)
class SelectionRule:
    kind: str = "rng_alpha"
    max_degree: int = 32
    alpha: float = 1.0
    theta: float = math.pi / 3
    kappa: int = 16

    def __post_init__(self):
        if self.kind not in SELECTION_KINDS:
            raise ContractError(f"unknown selection rule {self.kind!r}")
        if self.max_degree < 1:
            raise ContractError("max_degree must be >= 1")
        if self.alpha < 1:
            raise ContractError("alpha must be >= 1")
        if not 0 < self.theta < math.pi:
            raise ContractError("theta must lie in (0, pi)")
        if self.kappa < 1:
            raise ContractError("kappa must be >= 1")


# --------------------------------------------------------------------------
# C1: initialization


def init_random(base: VectorSet, k: int, seed: int) -> Graph:
    """``k`` distinct random non-self neighbors per vertex."""
    n = base.count
    if not 1 <= k < n:
        raise ContractError(f"k must be in [1, {n - 1}], got {k}")
    rng = np.random.default_rng(seed)
    ids = np.empty((n, k), dtype=np.int64)
    for v in range(n):
        pick = rng.choice(n - 1, size=k, replace=False)
        ids[v] = pick + (pick >= v)
    src = np.repeat(np.arange(n), k)
    d = _kernels.l2_rowwise(base.data, src, ids.ravel()).reshape(n, k)
    return Graph.from_arrays(ids, d)


def init_nn_descent(base: VectorSet, p: NNDescentParams) -> Graph:
    """Refine a random K-regular graph by neighbors-of-neighbors joins."""
    start = init_random(base, p.K, p.seed)
    n = base.count
    if p.iter == 0:
        return start
    ids = start.indices.reshape(n, p.K)
    ds = start.dists.reshape(n, p.K)
    out_ids, out_d = _kernels.nn_descent(
        base.data, ids, ds, p.L, p.iter, p.sample, p.reverse, p.seed % 2**32
    )
    return Graph.from_arrays(out_ids, out_d, sort=False)


def divide_dataset(base: VectorSet, min_cluster: int, seed: int) -> list[np.ndarray]:
    """Recursive two-pivot splits until every part has <= ``min_cluster`` ids."""
    if min_cluster < 2:
        raise ContractError("min_cluster must be >= 2")
    rng = np.random.default_rng(seed)
    leaves, stack = [], [np.arange(base.count, dtype=np.int64)]
    while stack:
        part = stack.pop()
        if part.size <= min_cluster:
            leaves.append(part)
            continue
        a, b = rng.choice(part.size, size=2, replace=False)
        da = _kernels.l2_to_rows(base.data, part, base.data[part[a]])
        db = _kernels.l2_to_rows(base.data, part, base.data[part[b]])
        left = da <= db
        if left.all() or not left.any():
            # pivots indistinguishable (duplicates); fall back to a random halving
            left = np.zeros(part.size, dtype=bool)
            left[rng.permutation(part.size)[: part.size // 2]] = True
        stack.append(part[~left])
        stack.append(part[left])
    return leaves


def build_mst(points, base: VectorSet) -> list[tuple[int, int, float]]:
    """Euclidean minimum spanning tree as ``(u, v, weight)`` with u < v."""
    pts = np.unique(np.asarray(points, dtype=np.int64))
    if pts.size < 1:
        raise ContractError("need at least one point")
    a, b, w = _kernels.kruskal(base.data, pts)
    return [(int(x), int(y), float(z)) for x, y, z in zip(a, b, w)]


def init_clustered_mst(base: VectorSet, repeats: int, min_cluster: int, seed: int) -> Graph:
    """Union of per-leaf MSTs over ``repeats`` independent dataset divisions."""
    src, dst = [], []
    for r in range(repeats):
        for leaf in divide_dataset(base, min_cluster, seed + r):
            if leaf.size < 2:
                continue
            a, b, _ = _kernels.kruskal(base.data, np.sort(leaf))
            src += [a, b]
            dst += [b, a]
    if not src:
        return Graph.from_lists([[] for _ in range(base.count)], [[] for _ in range(base.count)])
    return Graph.from_edges(base.count, np.concatenate(src), np.concatenate(dst), base)


# --------------------------------------------------------------------------
# C2: candidate neighbor acquisition


def acquire_candidates(g: Graph, base: VectorSet, p: int, strategy: str, size: int,
                       search_c: int = 100, seed: int = 0):
    """Candidate neighbors of ``p`` as ``(ids, dists)`` sorted by (dist, id)."""
    if not 0 <= p < g.vertex_count:
        raise ContractError("vertex id out of range")
    if size < 1:
        raise ContractError("size must be >= 1")
    if strategy == "neighbors":
        return g.neighbors(p)[:size].copy(), g.neighbor_distances(p)[:size].copy()
    if strategy == "expansion":
        mark, _, stamp = _scratch(g.vertex_count)
        ids, ds = _kernels.expansion_candidates(
            g.indptr, g.indices, g.dists, base.data, p, mark, stamp
        )
        order = np.lexsort((ids, ds))[:size]
        return ids[order], ds[order]
    if strategy == "search":
        nb = g.neighbors(p)
        if nb.size:
            seeds = nb[:1]
        else:
            seeds = np.random.default_rng([seed, p]).choice(g.vertex_count, size=1)
        c = max(search_c, 1)
        ids, ds, _ = _route(g, base, base.data[p], c, seeds.astype(np.int32), 1)
        keep = ids != p
        return ids[keep][:size], ds[keep][:size]
    raise ContractError(f"unknown candidate strategy {strategy!r}")


# --------------------------------------------------------------------------
# C3: neighbor selection


def angle(base: VectorSet, p: int, x: int, y: int) -> float:
    """Angle xpy in radians; pi when either leg has zero length."""
    return float(_kernels._angle(base.data, p, x, y))


def select_neighbors(p: int, cand_ids, cand_dists, rule: SelectionRule, base: VectorSet):
    """Choose ``p``'s neighbors from candidates sorted by (distance to p, id).

    Returns ``(ids, dists)``, a subset of the candidates in their order.
    """
    cand_ids = np.asarray(cand_ids, dtype=np.int64)
    cand_dists = np.asarray(cand_dists, dtype=np.float32)
    if cand_ids.size == 0:
        return cand_ids.astype(np.int32), cand_dists
    kind = rule.kind
    if kind == "distance_topk":
        pick = np.arange(min(rule.max_degree, cand_ids.size))
    elif kind == "rng_alpha":
        pick = _kernels.rng_alpha_select(base.data, cand_ids, cand_dists,
                                         float(rule.alpha), rule.max_degree)
    elif kind == "angle_threshold":
        pick = _kernels.angle_select(base.data, p, cand_ids, float(rule.theta), rule.max_degree)
    elif kind == "dpg_anglesum":
        pick = _kernels.anglesum_select(base.data, p, cand_ids, rule.kappa)
    elif kind == "mst":
        edges = build_mst(np.concatenate(([p], cand_ids)), base)
        touching = {v for a, b, _ in edges for v in (a, b) if p in (a, b)} - {p}
        pick = np.flatnonzero(np.isin(cand_ids, list(touching)))[: rule.max_degree]
    else:  # pragma: no cover - guarded by SelectionRule
        raise ContractError(kind)
    return cand_ids[pick].astype(np.int32), cand_dists[pick]


# --------------------------------------------------------------------------
# degree adjustment and connectivity


def add_reverse_edges(g: Graph, base: VectorSet) -> Graph:
    """Make every edge bidirectional (no re-truncation)."""
    src = np.repeat(np.arange(g.vertex_count, dtype=np.int64), g.degrees())
    dst = g.indices.astype(np.int64)
    return Graph.from_edges(g.vertex_count, np.concatenate([src, dst]),
                            np.concatenate([dst, src]), base)


def path_adjustment(g: Graph, base: VectorSet) -> Graph:
    """Drop p->n whenever some p->x->n has both legs shorter than p->n.

    Vertices are processed in id order and each list in ascending distance;
    removals are visible to later checks.
    """
    n = g.vertex_count
    ids, ds = g.to_lists()
    lookup = [dict(zip(i.tolist(), d.tolist())) for i, d in zip(ids, ds)]
    for p in range(n):
        mine = lookup[p]
        for nb, d_pn in list(zip(ids[p].tolist(), ds[p].tolist())):
            for x, d_px in mine.items():
                if x == nb or not d_px < d_pn:
                    continue
                d_xn = lookup[x].get(nb)
                if d_xn is not None and d_xn < d_pn:
                    del mine[nb]
                    break
        keep = np.isin(ids[p], np.fromiter(mine, dtype=np.int64, count=len(mine)))
        ids[p], ds[p] = ids[p][keep], ds[p][keep]
    return Graph.from_lists(ids, ds, sort=False)


def _insert_edge(ids, ds, src, dst, d):
    pos = 0
    row_d, row_i = ds[src], ids[src]
    while pos < row_d.size and (row_d[pos] < d or (row_d[pos] == d and row_i[pos] < dst)):
        pos += 1
    ids[src] = np.insert(row_i, pos, dst)
    ds[src] = np.insert(row_d, pos, d)


def ensure_connectivity_dfs(g: Graph, base: VectorSet, root: int, search_c: int = 100):
    """Make every vertex reachable from ``root``.

    Depth-first traversal from ``root``; whenever vertices remain unreached,
    the smallest-id one ``u`` is attached by an edge from the reached vertex
    nearest to it (found by routing from ``root``), and the traversal resumes
    at ``u``.  Returns ``(graph, added_edges)``.
    """
    n = g.vertex_count
    if not 0 <= root < n:
        raise ContractError("root out of range")
    ids, ds = g.to_lists()
    reached = np.zeros(n, dtype=bool)

    def dfs(start):
        stack = [start]
        reached[start] = True
        while stack:
            v = stack.pop()
            for u in ids[v][::-1]:
                if not reached[u]:
                    reached[u] = True
                    stack.append(int(u))

    dfs(root)
    added = []
    cur = g
    dirty = False
    while not reached.all():
        u = int(np.argmin(reached))
        if dirty:
            cur = Graph.from_lists(ids, ds, sort=False)
            dirty = False
        found, fd, _ = _route(cur, base, base.data[u], max(search_c, 1),
                              np.array([root], dtype=np.int32), 1)
        # routing from root only touches reached vertices, though it may
        # stop short; brute force over the reached set is the fallback
        if found.size == 0:
            pool = np.flatnonzero(reached)
            d = _kernels.l2_to_rows(base.data, pool, base.data[u])
            src, dist = int(pool[np.argmin(d)]), float(d.min())
        else:
            src, dist = int(found[0]), float(fd[0])
        _insert_edge(ids, ds, src, u, np.float32(dist))
        added.append((src, u))
        dirty = True
        dfs(u)
    if not added:
        return g, added
    return Graph.from_lists(ids, ds, sort=False), added
