"""Graph index type, exact KNN graphs and index-side statistics."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components as _scipy_cc

from . import _kernels
from .core import VectorSet, brute_force_knn, save_ragged_ivecs
from .validation import ContractError, FormatError

MAGIC = b"GANN"
VERSION = 1


class Graph:
    """Directed proximity graph with per-edge cached distances.

    Stored as CSR arrays; each vertex's list is sorted by (distance, id).
    Instances are read-only.
    """

    __slots__ = ("indptr", "indices", "dists")

    def __init__(self, indptr, indices, dists):
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int32)
        self.dists = np.ascontiguousarray(dists, dtype=np.float32)
        if self.indptr.ndim != 1 or self.indptr.size < 1 or self.indptr[0] != 0:
            raise ContractError("indptr must start at 0")
        if self.indptr[-1] != self.indices.size or self.indices.size != self.dists.size:
            raise ContractError("indptr, indices and dists disagree in length")
        for a in (self.indptr, self.indices, self.dists):
            a.flags.writeable = False

    @classmethod
    def from_lists(cls, ids, dists, *, sort=True):
        """Build from per-vertex id/distance sequences."""
        ids = [np.asarray(a, dtype=np.int32) for a in ids]
        dists = [np.asarray(a, dtype=np.float32) for a in dists]
        if sort:
            order = [np.lexsort((i, d)) for i, d in zip(ids, dists)]
            ids = [i[o] for i, o in zip(ids, order)]
            dists = [d[o] for d, o in zip(dists, order)]
        degrees = np.fromiter((a.size for a in ids), dtype=np.int64, count=len(ids))
        indptr = np.concatenate(([0], np.cumsum(degrees)))
        cat = (lambda xs, dt: np.concatenate(xs) if xs else np.zeros(0, dt))
        return cls(indptr, cat(ids, np.int32), cat(dists, np.float32))

    @classmethod
    def from_arrays(cls, ids, dists, *, sort=True):
        """Build a fixed-degree graph from ``(n, k)`` arrays."""
        ids = np.asarray(ids, dtype=np.int32)
        dists = np.asarray(dists, dtype=np.float32)
        if sort:
            order = np.lexsort((ids, dists), axis=-1)
            ids = np.take_along_axis(ids, order, axis=1)
            dists = np.take_along_axis(dists, order, axis=1)
        n, k = ids.shape
        return cls(np.arange(n + 1, dtype=np.int64) * k, ids.ravel(), dists.ravel())

    @classmethod
    def from_edges(cls, n, src, dst, base: VectorSet):
        """Build from directed edge arrays, dropping self-loops and duplicates."""
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        keep = src != dst
        key = np.unique(src[keep] * n + dst[keep])
        src, dst = key // n, key % n
        d = _kernels.l2_rowwise(base.data, src, dst)
        order = np.lexsort((dst, d, src))
        src, dst, d = src[order], dst[order], d[order]
        indptr = np.searchsorted(src, np.arange(n + 1))
        return cls(indptr, dst, d)

    @property
    def vertex_count(self) -> int:
        return self.indptr.size - 1

    @property
    def edge_count(self) -> int:
        return int(self.indices.size)

    def __len__(self):
        return self.vertex_count

    def neighbors(self, v) -> np.ndarray:
        return self.indices[self.indptr[v] : self.indptr[v + 1]]

    def neighbor_distances(self, v) -> np.ndarray:
        return self.dists[self.indptr[v] : self.indptr[v + 1]]

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def to_lists(self):
        """Mutable per-vertex copies, for construction stages."""
        return (
            [self.neighbors(v).copy() for v in range(self.vertex_count)],
            [self.neighbor_distances(v).copy() for v in range(self.vertex_count)],
        )

    def edge_keys(self) -> np.ndarray:
        """Directed edges encoded as ``src * n + dst``."""
        src = np.repeat(np.arange(self.vertex_count, dtype=np.int64), self.degrees())
        return src * self.vertex_count + self.indices

    def csr(self):
        return self.indptr, self.indices, self.dists

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return (
            np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.dists, other.dists)
        )

    def __repr__(self):
        return f"Graph(vertex_count={self.vertex_count}, edge_count={self.edge_count})"

    def validate(self, base: VectorSet | None = None, *, samples=256, seed=0):
        """Raise ContractError unless the adjacency invariants hold."""
        n = self.vertex_count
        if self.indices.size and (self.indices.min() < 0 or self.indices.max() >= n):
            raise ContractError("neighbor id out of range")
        src = np.repeat(np.arange(n), self.degrees())
        if np.any(src == self.indices):
            raise ContractError("self-loop present")
        if np.unique(self.edge_keys()).size != self.edge_count:
            raise ContractError("duplicate neighbor in a list")
        same = src[1:] == src[:-1]
        d0, d1 = self.dists[:-1], self.dists[1:]
        i0, i1 = self.indices[:-1], self.indices[1:]
        bad = same & ((d1 < d0) | ((d1 == d0) & (i1 <= i0)))
        if np.any(bad):
            raise ContractError("adjacency list not sorted by (distance, id)")
        if base is not None and self.edge_count:
            if base.count != n:
                raise ContractError("graph and dataset sizes differ")
            rng = np.random.default_rng(seed)
            pick = rng.choice(self.edge_count, size=min(samples, self.edge_count), replace=False)
            exact = _kernels.l2_rowwise(base.data, src[pick], self.indices[pick].astype(np.int64))
            if not np.array_equal(exact, self.dists[pick]):
                raise ContractError("cached distance disagrees with the kernel")
        return True

    # ------------------------------------------------------------------ I/O
    #   magic "GANN" | u32 version | u32 vertex_count, then per vertex
    #   i32 degree followed by degree (i32 id, f32 dist) pairs; little-endian.

    def save(self, path):
        pair = np.dtype([("id", "<i4"), ("dist", "<f4")])
        with open(path, "wb") as fh:
            fh.write(MAGIC + struct.pack("<II", VERSION, self.vertex_count))
            deg = self.degrees()
            for v in range(self.vertex_count):
                fh.write(struct.pack("<i", deg[v]))
                rec = np.empty(deg[v], dtype=pair)
                rec["id"] = self.neighbors(v)
                rec["dist"] = self.neighbor_distances(v)
                fh.write(rec.tobytes())

    @classmethod
    def load(cls, path):
        raw = open(path, "rb").read()
        if len(raw) < 12 or raw[:4] != MAGIC:
            raise FormatError(f"{path}: not a graph file")
        version, n = struct.unpack_from("<II", raw, 4)
        if version != VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        words = np.frombuffer(raw, dtype="<i4", offset=12)
        indptr = np.zeros(n + 1, dtype=np.int64)
        starts = np.empty(n, dtype=np.int64)
        pos = 0
        for v in range(n):
            if pos >= words.size:
                raise FormatError(f"{path}: truncated at vertex {v}")
            deg = int(words[pos])
            if deg < 0:
                raise FormatError(f"{path}: negative degree at vertex {v}")
            starts[v] = pos + 1
            indptr[v + 1] = indptr[v] + deg
            pos += 1 + 2 * deg
        if pos != words.size or (len(raw) - 12) % 4:
            raise FormatError(f"{path}: trailing bytes")
        take = np.concatenate(
            [np.arange(s, s + 2 * (indptr[v + 1] - indptr[v]), 2) for v, s in enumerate(starts)]
        ) if n else np.zeros(0, np.int64)
        ids = words[take].astype(np.int32)
        dists = words[take + 1].view("<f4").astype(np.float32)
        return cls(indptr, ids, dists)

    def save_ivecs(self, path):
        """Adjacency ids only; records vary in length."""
        save_ragged_ivecs(path, (self.neighbors(v) for v in range(self.vertex_count)))


@dataclass(frozen=True)
class GraphStats:
    gq: float
    ad: float
    d_max: int
    d_min: int
    cc: int


def build_exact_knng(base: VectorSet, k: int) -> Graph:
    """Each vertex linked to its ``k`` nearest other points."""
    n = base.count
    if not 1 <= k < n:
        raise ContractError(f"k must be in [1, {n - 1}], got {k}")
    gt = brute_force_knn(base, VectorSet(base.data, "query"), k + 1)
    ids, ds = gt.ids, gt.distances
    self_pos = ids == np.arange(n)[:, None]
    # rows without self (many exact duplicates) drop their last entry instead
    drop = np.where(self_pos.any(axis=1), self_pos.argmax(axis=1), k)
    keep = np.ones_like(ids, dtype=bool)
    keep[np.arange(n), drop] = False
    return Graph.from_arrays(ids[keep].reshape(n, k), ds[keep].reshape(n, k), sort=False)


def graph_quality(g: Graph, exact: Graph) -> float:
    """Fraction of the exact graph's directed edges present in ``g``."""
    if g.vertex_count != exact.vertex_count:
        raise ContractError("vertex counts differ")
    if exact.edge_count == 0:
        return 1.0
    hit = np.isin(exact.edge_keys(), g.edge_keys(), assume_unique=True)
    return float(hit.sum()) / exact.edge_count


def nearest_neighbor_rate(g: Graph, exact: Graph) -> float:
    """Share of vertices linked to their exact nearest neighbor."""
    if g.vertex_count != exact.vertex_count:
        raise ContractError("vertex counts differ")
    n = g.vertex_count
    has = exact.degrees() > 0
    first = exact.indices[exact.indptr[:-1][has]]
    keys = np.flatnonzero(has).astype(np.int64) * n + first
    return float(np.isin(keys, g.edge_keys()).sum()) / max(n, 1)


def degree_stats(g: Graph) -> tuple[float, int, int]:
    if g.vertex_count == 0:
        raise ContractError("empty graph")
    deg = g.degrees()
    return float(g.edge_count) / g.vertex_count, int(deg.max()), int(deg.min())


def connected_components(g: Graph) -> int:
    """Number of weakly connected components."""
    n = g.vertex_count
    if n == 0:
        return 0
    adj = csr_matrix((np.ones(g.edge_count, dtype=np.int8), g.indices, g.indptr), shape=(n, n))
    count, _ = _scipy_cc(adj, directed=True, connection="weak")
    return int(count)


def graph_stats(g: Graph, exact: Graph | None = None) -> GraphStats:
    ad, d_max, d_min = degree_stats(g)
    gq = graph_quality(g, exact) if exact is not None else float("nan")
    return GraphStats(gq=gq, ad=ad, d_max=d_max, d_min=d_min, cc=connected_components(g))
