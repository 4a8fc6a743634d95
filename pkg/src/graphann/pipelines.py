"""Algorithm assembly: component configs, named presets, build and query."""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import construct, search
from .core import VectorSet
from .graph import Graph, build_exact_knng
from .search import SeedStrategy
from .validation import ConfigError, ContractError, parse_kv_text

C1_KINDS = ("random", "nn_descent", "exact_knng", "clustered_mst")
C2_KINDS = ("none",) + construct.CANDIDATE_STRATEGIES
C3_KINDS = ("none",) + construct.SELECTION_KINDS
C7_KINDS = ("bfs", "range", "guided", "backtrack", "two_stage", "exhaustive")
PRESETS = ("kgraph", "dpg", "nsg", "nssg", "vamana", "hcnng_lite", "oa")


@dataclass(frozen=True)
class PipelineConfig:
    """Component choices for one graph-ANNS algorithm.

    The text form is one ``key=value`` per line using the field names below;
    tuples are comma-separated and booleans are ``true``/``false``.
    """

    name: str = "custom"
    # C1 initialization
    c1: str = "nn_descent"
    c1_k: int = 20
    c1_pool: int = 40
    c1_iter: int = 8
    c1_sample: int = 10
    c1_reverse: int = 20
    c1_repeats: int = 10
    c1_min_cluster: int = 500
    # C2 candidates, C3 selection (one pass per alpha)
    c2: str = "none"
    c2_size: int = 100
    c2_search_c: int = 100
    c3: str = "none"
    c3_max_degree: int = 32
    c3_alpha: tuple = (1.0,)
    c3_theta_deg: float = 60.0
    c3_kappa: int = 10
    path_adjustment: bool = False
    reverse_edges: bool = False
    # C5 connectivity
    c5: bool = False
    c5_root: str = "centroid"
    c5_search_c: int = 100
    # C4/C6 seeds
    seeds: str = "random"
    seeds_count: int = 1
    seeds_ids: tuple = ()
    seeds_per_query: bool = False
    # C7 routing
    c7: str = "bfs"
    c7_epsilon: float = 0.1
    c7_backtrack_budget: int = 10
    c7_stage1_hops: int = 64
    deterministic: bool = True
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "c3_alpha", tuple(float(a) for a in self.c3_alpha))
        object.__setattr__(self, "seeds_ids", tuple(int(i) for i in self.seeds_ids))
        self.validate()

    def validate(self):
        def need(ok, msg):
            if not ok:
                raise ConfigError(msg)

        need(self.c1 in C1_KINDS, f"c1 must be one of {C1_KINDS}")
        need(self.c2 in C2_KINDS, f"c2 must be one of {C2_KINDS}")
        need(self.c3 in C3_KINDS, f"c3 must be one of {C3_KINDS}")
        need(self.c7 in C7_KINDS, f"c7 must be one of {C7_KINDS}")
        need(self.c5_root in ("centroid", "seeds"), "c5_root must be centroid or seeds")
        need(self.c1_k >= 1, "c1_k must be >= 1")
        need(self.c1_repeats >= 1 and self.c1_min_cluster >= 2, "bad clustered_mst params")
        if self.c1 == "nn_descent":
            try:
                self.nn_descent_params()
            except ContractError as exc:
                raise ConfigError(str(exc)) from None
        need(self.c2_size >= 1 and self.c2_search_c >= 1, "c2 sizes must be >= 1")
        if self.c3 != "none":
            need(self.c2 != "none", "a selection rule needs a candidate strategy (c2)")
            need(len(self.c3_alpha) >= 1, "c3_alpha needs at least one value")
            for rule in self.selection_rules():
                del rule  # constructing each rule validates it
        need(self.c5_search_c >= 1, "c5_search_c must be >= 1")
        try:
            self.seed_strategy()
        except ContractError as exc:
            raise ConfigError(str(exc)) from None
        need(self.c7_epsilon >= 0, "c7_epsilon must be >= 0")
        need(self.c7_backtrack_budget >= 0, "c7_backtrack_budget must be >= 0")
        if self.c7 == "two_stage":
            need(self.c7_stage1_hops >= 1, "two_stage needs c7_stage1_hops >= 1")

    def nn_descent_params(self) -> construct.NNDescentParams:
        return construct.NNDescentParams(
            K=self.c1_k, L=self.c1_pool, iter=self.c1_iter, sample=self.c1_sample,
            reverse=self.c1_reverse, seed=self.rng_seed,
        )

    def selection_rules(self) -> list[construct.SelectionRule]:
        try:
            return [
                construct.SelectionRule(
                    kind=self.c3, max_degree=self.c3_max_degree, alpha=a,
                    theta=math.radians(self.c3_theta_deg), kappa=self.c3_kappa,
                )
                for a in self.c3_alpha
            ]
        except ContractError as exc:
            raise ConfigError(str(exc)) from None

    def seed_strategy(self) -> SeedStrategy:
        return SeedStrategy(kind=self.seeds, count=self.seeds_count, seed=self.rng_seed,
                            fixed_ids=self.seeds_ids, per_query=self.seeds_per_query)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool):
                v = "true" if v else "false"
            elif isinstance(v, tuple):
                v = ",".join(repr(x) for x in v)
            lines.append(f"{f.name}={v}\n")
        return "".join(lines)

    @classmethod
    def from_text(cls, text: str) -> "PipelineConfig":
        kv = parse_kv_text(text)
        base = cls()
        types = {f.name: type(getattr(base, f.name)) for f in fields(cls)}
        unknown = sorted(set(kv) - set(types))
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        kw = {}
        for key, raw in kv.items():
            t = types[key]
            try:
                if t is bool:
                    if raw.lower() not in ("true", "false", "1", "0"):
                        raise ValueError(raw)
                    kw[key] = raw.lower() in ("true", "1")
                elif t is tuple:
                    conv = float if key == "c3_alpha" else int
                    kw[key] = tuple(conv(x) for x in raw.split(",") if x.strip())
                else:
                    kw[key] = t(raw)
            except ValueError:
                raise ConfigError(f"bad value for {key}: {raw!r}") from None
        return cls(**kw)

    def with_params(self, **kw) -> "PipelineConfig":
        return replace(self, **kw)

    def as_dict(self) -> dict:
        return asdict(self)


def preset(name: str) -> PipelineConfig:
    """The component mapping of a named algorithm."""
    nnd = dict(c1="nn_descent", c1_k=20, c1_pool=40, c1_iter=8, c1_sample=10, c1_reverse=20)
    table = {
        "kgraph": dict(nnd, seeds="random", seeds_count=10, seeds_per_query=True, c7="bfs"),
        "dpg": dict(nnd, c2="neighbors", c2_size=20, c3="dpg_anglesum", c3_kappa=10,
                    c3_max_degree=10, reverse_edges=True,
                    seeds="random", seeds_count=10, seeds_per_query=True, c7="bfs"),
        "nsg": dict(nnd, c2="search", c2_size=100, c2_search_c=100, c3="rng_alpha",
                    c3_alpha=(1.0,), c3_max_degree=32, c5=True, c5_root="centroid",
                    seeds="centroid", c7="bfs"),
        "nssg": dict(nnd, c2="expansion", c2_size=100, c3="angle_threshold",
                     c3_theta_deg=60.0, c3_max_degree=32, c5=True, c5_root="seeds",
                     seeds="random", seeds_count=10, c7="bfs"),
        "vamana": dict(c1="random", c1_k=32, c2="search", c2_size=100, c2_search_c=100,
                       c3="rng_alpha", c3_alpha=(1.0, 2.0), c3_max_degree=32,
                       seeds="centroid", c7="bfs"),
        "hcnng_lite": dict(c1="clustered_mst", c1_repeats=10, c1_min_cluster=500,
                           seeds="random", seeds_count=10, c7="guided"),
        "oa": dict(nnd, c2="expansion", c2_size=100, c3="rng_alpha", c3_alpha=(1.0,),
                   c3_max_degree=32, c5=True, c5_root="seeds",
                   seeds="random", seeds_count=32, c7="two_stage", c7_stage1_hops=64),
    }
    if name not in table:
        raise ConfigError(f"unknown preset {name!r}; choose from {PRESETS}")
    return PipelineConfig(name=name, **table[name])


@dataclass
class Index:
    """A built graph together with what is needed to query it."""

    graph: Graph
    base: VectorSet
    config: PipelineConfig
    build_seconds: float = 0.0
    seeds: np.ndarray | None = None
    repair_edges: list = field(default_factory=list)

    def __post_init__(self):
        if self.graph.vertex_count != self.base.count:
            raise ContractError("graph.vertex_count must equal base.count")


def _initial_graph(base: VectorSet, cfg: PipelineConfig) -> Graph:
    if cfg.c1 == "random":
        return construct.init_random(base, cfg.c1_k, cfg.rng_seed)
    if cfg.c1 == "nn_descent":
        return construct.init_nn_descent(base, cfg.nn_descent_params())
    if cfg.c1 == "exact_knng":
        return build_exact_knng(base, cfg.c1_k)
    return construct.init_clustered_mst(base, cfg.c1_repeats, cfg.c1_min_cluster, cfg.rng_seed)


def _select_pass(g: Graph, base: VectorSet, cfg: PipelineConfig, rule) -> Graph:
    # every vertex reads the same snapshot ``g``; updates land in a new graph
    ids, ds = [], []
    for p in range(base.count):
        cid, cd = construct.acquire_candidates(g, base, p, cfg.c2, cfg.c2_size,
                                               cfg.c2_search_c, seed=cfg.rng_seed)
        sid, sd = construct.select_neighbors(p, cid, cd, rule, base)
        ids.append(sid)
        ds.append(sd)
    return Graph.from_lists(ids, ds, sort=False)


def build_index(base: VectorSet, config: PipelineConfig) -> Index:
    """Run C1, then C2+C3 per vertex, the optional adjustments and C5."""
    config.validate()
    if config.c1 in ("random", "nn_descent", "exact_knng") and not config.c1_k < base.count:
        raise ConfigError(f"c1_k={config.c1_k} must be below the dataset size {base.count}")
    start = time.perf_counter()
    g = _initial_graph(base, config)
    if config.c3 != "none":
        for rule in config.selection_rules():
            g = _select_pass(g, base, config, rule)
    if config.path_adjustment:
        g = construct.path_adjustment(g, base)
    if config.reverse_edges:
        g = construct.add_reverse_edges(g, base)

    strategy = config.seed_strategy()
    static = None if strategy.per_query else search.acquire_seeds(g, base, strategy)
    repairs = []
    if config.c5:
        if config.c5_root == "seeds" and static is not None:
            roots = [int(s) for s in static]
        else:
            roots = [search.centroid_vertex(base)]
        # with several entry points, every one of them must reach all of V
        for root in roots:
            g, added = construct.ensure_connectivity_dfs(g, base, root, config.c5_search_c)
            repairs += added
    elapsed = time.perf_counter() - start
    return Index(graph=g, base=base, config=config, build_seconds=elapsed,
                 seeds=static, repair_edges=repairs)


def query(index: Index, q, k: int, c: int):
    """Route ``q`` through ``index`` per its C4/C6 and C7 choices."""
    g, base, cfg = index.graph, index.base, index.config
    if g.vertex_count == 0:
        raise ContractError("empty index")
    if not c >= k >= 1:
        raise ContractError(f"need c >= k >= 1, got c={c}, k={k}")
    if cfg.c7 == "exhaustive":
        return search.linear_scan(g, base, q, k)
    seeds = index.seeds
    if seeds is None:
        seeds = search.acquire_seeds(g, base, cfg.seed_strategy(), query=q)
    if cfg.c7 == "bfs":
        return search.best_first_search(g, base, q, c, seeds, k)
    if cfg.c7 == "guided":
        return search.guided_search(g, base, q, c, seeds, k)
    if cfg.c7 == "backtrack":
        return search.backtrack_search(g, base, q, c, seeds, k, cfg.c7_backtrack_budget)
    if cfg.c7 == "two_stage":
        return search.two_stage_search(g, base, q, c, seeds, k, cfg.c7_stage1_hops)
    ids, trace = search.range_search(g, base, q, cfg.c7_epsilon, seeds, k)
    trace.c = c
    return ids, trace
