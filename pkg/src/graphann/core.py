"""Vector datasets, the Euclidean kernel, TexMex file I/O and ground truth."""

from __future__ import annotations

import os
from dataclasses import dataclass, fields

import numpy as np

from . import _kernels
from .validation import ContractError, FormatError, check_vectors, parse_kv_text


@dataclass(frozen=True, eq=False)
class VectorSet:
    """An immutable ``(count, dim)`` float32 dataset.

    Vector ids are the row numbers.  ``role`` is ``"base"`` or ``"query"``.
    """

    data: np.ndarray
    role: str = "base"

    def __post_init__(self):
        arr = check_vectors(self.data)
        if arr is self.data and arr.flags.writeable:
            arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)
        if self.role not in ("base", "query"):
            raise ContractError(f"role must be 'base' or 'query', got {self.role!r}")

    @property
    def count(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def __len__(self):
        return self.count

    def __getitem__(self, i):
        return self.data[i]

    def __eq__(self, other):
        if not isinstance(other, VectorSet):
            return NotImplemented
        return self.role == other.role and np.array_equal(self.data, other.data)


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Per-query ids of the ``k`` exact nearest base vectors, nearest first."""

    ids: np.ndarray
    distances: np.ndarray | None = None

    def __post_init__(self):
        ids = np.ascontiguousarray(self.ids, dtype=np.int32)
        if ids.ndim != 2 or ids.shape[1] < 1:
            raise ContractError("ground truth must be a 2-D array with k >= 1")
        ids.flags.writeable = False
        object.__setattr__(self, "ids", ids)

    @property
    def k(self) -> int:
        return self.ids.shape[1]

    def __len__(self):
        return self.ids.shape[0]

    def __eq__(self, other):
        if not isinstance(other, GroundTruth):
            return NotImplemented
        return np.array_equal(self.ids, other.ids)


def euclidean_distance(x, y) -> float:
    """L2 distance with float32 accumulation."""
    x = np.ascontiguousarray(x, dtype=np.float32)
    y = np.ascontiguousarray(y, dtype=np.float32)
    if x.ndim != 1 or x.shape != y.shape:
        raise ContractError(f"dimension mismatch: {x.shape} vs {y.shape}")
    return float(_kernels.l2(x, y))


# --------------------------------------------------------------------------
# fvecs / ivecs


def _read_records(path, payload_dtype, *, ragged=False):
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size == 0:
        return [] if ragged else np.zeros((0, 0), dtype=payload_dtype)
    if raw.size < 4:
        raise FormatError(f"{path}: trailing partial record ({raw.size} bytes)")
    if not ragged:
        dim = int(raw[:4].view("<i4")[0])
        if dim <= 0:
            raise FormatError(f"{path}: non-positive dimension {dim}")
        rec = 4 * (dim + 1)
        if raw.size % rec:
            raise FormatError(f"{path}: trailing partial record")
        words = raw.view("<i4").reshape(-1, dim + 1)
        if np.any(words[:, 0] != dim):
            raise FormatError(f"{path}: inconsistent per-record dimension")
        body = raw.reshape(-1, rec)[:, 4:].copy()
        return body.view(np.dtype(payload_dtype).newbyteorder("<")).astype(payload_dtype)

    if raw.size % 4:
        raise FormatError(f"{path}: trailing partial record")
    words = raw.view("<i4")
    rows, pos = [], 0
    while pos < words.size:
        dim = int(words[pos])
        if dim < 0 or pos + 1 + dim > words.size:
            raise FormatError(f"{path}: malformed record at word {pos}")
        rows.append(words[pos + 1 : pos + 1 + dim].astype(payload_dtype))
        pos += dim + 1
    return rows


def _write_records(path, rows, payload_dtype):
    arr = np.asarray(rows, dtype=payload_dtype)
    if arr.ndim != 2:
        raise ContractError("expected a 2-D array of records")
    n, dim = arr.shape
    out = np.empty((n, dim + 1), dtype="<i4")
    out[:, 0] = dim
    out[:, 1:] = arr.astype(np.dtype(payload_dtype).newbyteorder("<")).view("<i4")
    out.tofile(path)


def load_vectors(path: str | os.PathLike, format: str | None = None, role: str = "base"):
    """Load an ``.fvecs`` file as a VectorSet or an ``.ivecs`` file as GroundTruth.

    Each record is a little-endian int32 ``dim`` followed by ``dim`` 4-byte
    payload values.  ``format`` defaults to the file extension.
    """
    format = format or os.path.splitext(str(path))[1].lstrip(".")
    if format == "fvecs":
        data = _read_records(path, np.float32)
        if data.shape[0] == 0:
            raise FormatError(f"{path}: empty file")
        if not np.all(np.isfinite(data)):
            raise FormatError(f"{path}: non-finite values")
        return VectorSet(data, role=role)
    if format == "ivecs":
        rows = _read_records(path, np.int32)
        if rows.shape[0] == 0:
            raise FormatError(f"{path}: empty file")
        return GroundTruth(rows)
    raise ContractError(f"unknown vector format {format!r}")


def save_vectors(path, obj, format: str | None = None):
    format = format or os.path.splitext(str(path))[1].lstrip(".")
    if format == "fvecs":
        data = obj.data if isinstance(obj, VectorSet) else obj
        _write_records(path, data, np.float32)
    elif format == "ivecs":
        ids = obj.ids if isinstance(obj, GroundTruth) else obj
        _write_records(path, ids, np.int32)
    else:
        raise ContractError(f"unknown vector format {format!r}")


def load_ragged_ivecs(path) -> list[np.ndarray]:
    """Read an ivecs file whose records may differ in length."""
    return _read_records(path, np.int32, ragged=True)


def save_ragged_ivecs(path, rows):
    parts = []
    for r in rows:
        r = np.asarray(r, dtype="<i4")
        parts.append(np.array([r.size], dtype="<i4"))
        parts.append(r)
    (np.concatenate(parts) if parts else np.zeros(0, "<i4")).tofile(path)


# --------------------------------------------------------------------------
# synthetic data
#
# Streams come from SplitMix64 in counter mode: word i of a stream seeded
# with s is mix64(s + (i + 1) * 0x9E3779B97F4A7C15).  A uniform double is the
# top 53 bits scaled by 2**-53; normals come from Box-Muller on consecutive
# uniform pairs (u1, u2) as sqrt(-2 ln(1 - u1)) * cos(2 pi u2).  These three
# lines are all another implementation needs to reproduce datasets exactly.

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_QUERY_SALT = np.uint64(0xD1B54A32D192ED03)


def _mix64(z):
    z = z.copy()
    z ^= z >> np.uint64(30)
    z *= np.uint64(0xBF58476D1CE4E5B9)
    z ^= z >> np.uint64(27)
    z *= np.uint64(0x94D049BB133111EB)
    z ^= z >> np.uint64(31)
    return z


def splitmix64_stream(seed: int, count: int, offset: int = 0) -> np.ndarray:
    """Words ``offset .. offset+count-1`` of the SplitMix64 stream for ``seed``."""
    with np.errstate(over="ignore"):
        ctr = np.arange(offset + 1, offset + count + 1, dtype=np.uint64)
        return _mix64(np.uint64(seed % 2**64) + ctr * _GOLDEN)


def uniform_stream(seed: int, count: int, offset: int = 0) -> np.ndarray:
    words = splitmix64_stream(seed, count, offset)
    return (words >> np.uint64(11)).astype(np.float64) * (1.0 / 2**53)


def normal_stream(seed: int, count: int, offset: int = 0) -> np.ndarray:
    u = uniform_stream(seed, 2 * count, 2 * offset)
    return np.sqrt(-2.0 * np.log1p(-u[0::2])) * np.cos(2.0 * np.pi * u[1::2])


@dataclass(frozen=True)
class SyntheticSpec:
    """Clustered Gaussian dataset recipe."""

    dim: int = 32
    cardinality: int = 10_000
    clusters: int = 10
    sd: float = 5.0
    query_count: int = 1_000
    seed: int = 1

    def __post_init__(self):
        for name in ("dim", "cardinality", "clusters", "query_count"):
            if int(getattr(self, name)) < 1:
                raise ContractError(f"{name} must be >= 1")
        if not self.sd > 0:
            raise ContractError("sd must be > 0")
        if self.clusters > self.cardinality:
            raise ContractError("clusters must not exceed cardinality")

    def to_text(self) -> str:
        return "".join(f"{f.name}={getattr(self, f.name)}\n" for f in fields(self))

    @classmethod
    def from_text(cls, text: str) -> "SyntheticSpec":
        kv = parse_kv_text(text)
        known = {f.name: f.type for f in fields(cls)}
        unknown = set(kv) - set(known)
        if unknown:
            raise ContractError(f"unknown synthetic spec keys: {sorted(unknown)}")
        kw = {k: (float(v) if k == "sd" else int(v)) for k, v in kv.items()}
        return cls(**kw)


def generate_synthetic(spec: SyntheticSpec) -> tuple[VectorSet, VectorSet]:
    """Draw base and query sets from ``spec``.

    Cluster centers are uniform in ``[0, 100]^dim``; point ``i`` belongs to
    cluster ``i % clusters`` and adds N(0, sd^2) noise per coordinate.
    Queries share the centers and use the stream seeded ``seed ^ salt``.
    """
    d, k = spec.dim, spec.clusters
    centers = 100.0 * uniform_stream(spec.seed, k * d).reshape(k, d)

    def draw(seed, count, offset):
        noise = normal_stream(seed, count * d, offset).reshape(count, d)
        return (centers[np.arange(count) % k] + spec.sd * noise).astype(np.float32)

    base = draw(spec.seed, spec.cardinality, k * d)
    qseed = int(np.uint64(spec.seed % 2**64) ^ _QUERY_SALT)
    queries = draw(qseed, spec.query_count, 0)
    return VectorSet(base, "base"), VectorSet(queries, "query")


# --------------------------------------------------------------------------
# exact search


def _topk_rows(dist, k):
    """Row-wise ``k`` smallest by (distance, id)."""
    n = dist.shape[1]
    ids = np.empty((dist.shape[0], k), dtype=np.int32)
    ds = np.empty((dist.shape[0], k), dtype=np.float32)
    if k == n:
        order = np.argsort(dist, axis=1, kind="stable")
        return order.astype(np.int32), np.take_along_axis(dist, order, axis=1)
    kth = np.partition(dist, k - 1, axis=1)[:, k - 1]
    for r in range(dist.shape[0]):
        cand = np.flatnonzero(dist[r] <= kth[r])
        o = cand[np.argsort(dist[r, cand], kind="stable")[:k]]
        ids[r] = o
        ds[r] = dist[r, o]
    return ids, ds


def pairwise_distances(queries: np.ndarray, base: np.ndarray) -> np.ndarray:
    return _kernels.l2_matrix(
        np.ascontiguousarray(queries, dtype=np.float32),
        np.ascontiguousarray(base, dtype=np.float32),
    )


def brute_force_knn(base: VectorSet, queries: VectorSet, k: int, *, chunk: int = 512) -> GroundTruth:
    """Exact k-NN by linear scan; ties go to the smaller id."""
    if not 1 <= k <= base.count:
        raise ContractError(f"k must be in [1, {base.count}], got {k}")
    if base.dim != queries.dim:
        raise ContractError(f"dimension mismatch: {base.dim} vs {queries.dim}")
    ids = np.empty((queries.count, k), dtype=np.int32)
    ds = np.empty((queries.count, k), dtype=np.float32)
    for s in range(0, queries.count, chunk):
        block = pairwise_distances(queries.data[s : s + chunk], base.data)
        ids[s : s + chunk], ds[s : s + chunk] = _topk_rows(block, k)
    return GroundTruth(ids, ds)
