"""Benchmark metrics and orchestration."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .core import GroundTruth, SyntheticSpec, VectorSet, brute_force_knn, generate_synthetic
from .graph import build_exact_knng, graph_stats
from .pipelines import Index, PipelineConfig, build_index, query
from .validation import ContractError

CSV_COLUMNS = (
    "preset", "dataset", "c", "recall", "qps", "speedup", "mean_ndc", "mean_pl",
    "gq", "ad", "d_max", "d_min", "cc", "build_seconds",
)


def evaluate_recall(results, gt: GroundTruth, k: int) -> float:
    """Mean over queries of ``|result ∩ gt[:k]| / k``."""
    if len(results) != len(gt):
        raise ContractError(f"{len(results)} result rows for {len(gt)} queries")
    if not 1 <= k <= gt.k:
        raise ContractError(f"k must be in [1, {gt.k}]")
    total = 0
    for row, truth in zip(results, gt.ids[:, :k]):
        row = np.asarray(row)
        if row.size > k:
            raise ContractError("result row longer than k")
        total += np.intersect1d(row, truth).size
    return total / (k * len(results))


def _ulp_walk(x, steps):
    """``x`` and its neighbors out to ``steps`` ulps, nearest first."""
    yield x
    lo = hi = x
    for _ in range(steps):
        lo, hi = math.nextafter(lo, -math.inf), math.nextafter(hi, math.inf)
        yield lo
        yield hi


def exact_speedup(n: int, mean_ndc: float) -> float:
    """``n / mean_ndc``, nudged by ulps so that ``speedup * mean_ndc == n`` when possible."""
    s = n / mean_ndc
    for x in _ulp_walk(s, 16):
        if x * mean_ndc == n:
            return x
    return s


def speedup_pair(n: int, mean_ndc: float) -> tuple[float, float]:
    """``(mean_ndc, speedup)`` with ``speedup * mean_ndc == n`` exactly.

    Some quotients admit no such speedup because the products jump over
    ``n``; the mean (itself a rounded quotient) is then moved by a few ulps.
    """
    for m in _ulp_walk(mean_ndc, 1 << 14):
        s = exact_speedup(n, m)
        if s * m == n:
            return m, s
    return mean_ndc, n / mean_ndc


@dataclass
class MetricsRow:
    preset: str
    dataset: str
    c: int
    recall: float
    qps: float
    speedup: float
    mean_ndc: float
    mean_pl: float
    gq: float
    ad: float
    d_max: int
    d_min: int
    cc: int
    build_seconds: float


@dataclass
class MetricsReport:
    rows: list = field(default_factory=list)
    # per row: the result id lists, in query order
    results: list = field(default_factory=list)
    nn_rate: float = float("nan")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(getattr(r, name)) for name in CSV_COLUMNS])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps([asdict(r) for r in self.rows], indent=1)

    @staticmethod
    def rows_from_csv(text: str) -> list[dict]:
        return list(csv.DictReader(io.StringIO(text)))


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


_exact_cache: dict = {}


def _gq_oracle(base: VectorSet, k: int):
    key = (id(base), k)
    hit = _exact_cache.get(key)
    if hit is None or hit[0] is not base:
        _exact_cache.clear()
        hit = (base, build_exact_knng(base, k))
        _exact_cache[key] = hit
    return hit[1]


def default_k_gq(index: Index) -> int:
    cfg = index.config
    if cfg.c1 in ("random", "nn_descent", "exact_knng"):
        return cfg.c1_k
    return 10


def run_benchmark(index: Index, queries: VectorSet, gt: GroundTruth, k: int, c_sweep,
                  *, dataset: str = "", k_gq: int | None = None) -> MetricsReport:
    """One row per capacity in ``c_sweep``.

    Only the query loop is timed; ground truth and the GQ oracle are built
    outside it.
    """
    c_sweep = [int(c) for c in c_sweep]
    if not c_sweep or min(c_sweep) < k:
        raise ContractError("every c in the sweep must be >= k")
    if len(gt) != queries.count:
        raise ContractError("ground truth does not match the query set")
    n = index.base.count
    k_gq = k_gq or default_k_gq(index)
    stats = graph_stats(index.graph, _gq_oracle(index.base, min(k_gq, n - 1)))
    report = MetricsReport()
    for c in c_sweep:
        rows, ndc, hops = [], 0, 0
        t0 = time.perf_counter()
        for q in queries.data:
            ids, trace = query(index, q, k, c)
            rows.append(ids)
            ndc += trace.ndc
            hops += trace.hops
        elapsed = time.perf_counter() - t0
        mean_ndc, speedup = speedup_pair(n, ndc / queries.count)
        report.rows.append(MetricsRow(
            preset=index.config.name, dataset=dataset, c=c,
            recall=evaluate_recall(rows, gt, k),
            qps=queries.count / max(elapsed, 1e-12),
            speedup=speedup,
            mean_ndc=mean_ndc, mean_pl=hops / queries.count,
            gq=stats.gq, ad=stats.ad, d_max=stats.d_max, d_min=stats.d_min, cc=stats.cc,
            build_seconds=index.build_seconds,
        ))
        report.results.append(rows)
    return report


def ndc_at_recall(rows, target: float) -> float:
    """NDC at ``target`` recall, interpolating linearly between sweep points.

    Infinite when no row reaches the target.
    """
    pts = sorted((r.c, r.recall, r.mean_ndc) for r in rows)
    prev = None
    for c, rec, ndc in pts:
        if rec >= target:
            if prev is None or prev[1] >= rec:
                return ndc
            t = (target - prev[1]) / (rec - prev[1])
            return prev[2] + t * (ndc - prev[2])
        prev = (c, rec, ndc)
    return math.inf


@dataclass
class SweepRow:
    n: int
    c: int
    recall: float
    mean_ndc: float
    unreachable: bool


def _measure(index, queries, gt, k, c):
    rows, ndc = [], 0
    for q in queries.data:
        ids, trace = query(index, q, k, c)
        rows.append(ids)
        ndc += trace.ndc
    return evaluate_recall(rows, gt, k), ndc / queries.count


def smallest_c_for(index: Index, queries, gt, k, target: float):
    """Smallest c (doubling, then bisection) with recall >= target."""
    n = index.base.count
    cache = {}

    def at(c):
        if c not in cache:
            cache[c] = _measure(index, queries, gt, k, c)
        return cache[c]

    lo, c = k - 1, k  # lo: largest capacity known to miss the target
    while at(c)[0] < target:
        if c >= n:
            return c, at(c)[0], at(c)[1], True
        lo, c = c, min(2 * c, n)
    hi = c
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if at(mid)[0] >= target:
            hi = mid
        else:
            lo = mid
    return hi, at(hi)[0], at(hi)[1], False


def cardinality_sweep(spec_template: SyntheticSpec, sizes, config: PipelineConfig,
                      recall_target: float, k: int) -> list[SweepRow]:
    """NDC needed to reach ``recall_target`` as the dataset grows."""
    sizes = [int(s) for s in sizes]
    if sizes != sorted(sizes):
        raise ContractError("sizes must be ascending")
    if not 0 <= recall_target < 1:
        raise ContractError("recall_target must be in [0, 1)")
    out = []
    for n in sizes:
        spec = SyntheticSpec(**{**asdict(spec_template), "cardinality": n})
        base, queries = generate_synthetic(spec)
        gt = brute_force_knn(base, queries, k)
        index = build_index(base, config)
        c, rec, ndc, bad = smallest_c_for(index, queries, gt, k, recall_target)
        out.append(SweepRow(n=n, c=c, recall=rec, mean_ndc=ndc, unreachable=bad))
    return out


def sweep_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    names = [f.name for f in fields(SweepRow)]
    w.writerow(names)
    for r in rows:
        w.writerow([_fmt(getattr(r, f)) for f in names])
    return buf.getvalue()
