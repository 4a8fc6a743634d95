"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data or format error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import bench
from .core import (
    SyntheticSpec,
    brute_force_knn,
    generate_synthetic,
    load_vectors,
    save_ragged_ivecs,
    save_vectors,
)
from .graph import Graph
from .pipelines import PRESETS, Index, PipelineConfig, build_index, preset, query
from .search import acquire_seeds
from .validation import ConfigError, ContractError, FormatError


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _int_list(text):
    try:
        vals = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="single source of randomness")
    common.add_argument("--deterministic", action="store_true")
    common.add_argument("--threads", type=int, default=None)

    pipeline = argparse.ArgumentParser(add_help=False)
    grp = pipeline.add_mutually_exclusive_group()
    grp.add_argument("--preset", choices=PRESETS)
    grp.add_argument("--config", type=Path, help="PipelineConfig key=value file")

    p = _Parser(prog="graphann", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", parents=[common], help="write a synthetic fvecs base/query pair")
    g.add_argument("--spec", type=Path, help="key=value SyntheticSpec file")
    g.add_argument("--dim", type=int)
    g.add_argument("--n", type=int)
    g.add_argument("--clusters", type=int)
    g.add_argument("--sd", type=float)
    g.add_argument("--queries", type=int)
    g.add_argument("--out", required=True, help="output prefix")

    t = sub.add_parser("gt", parents=[common], help="exact ground truth by linear scan")
    t.add_argument("--base", type=Path, required=True)
    t.add_argument("--query", type=Path, required=True)
    t.add_argument("--k", type=int, required=True)
    t.add_argument("--out", type=Path, required=True)

    b = sub.add_parser("build", parents=[common, pipeline], help="build and save a graph index")
    b.add_argument("--base", type=Path, required=True)
    b.add_argument("--out", type=Path, required=True)

    s = sub.add_parser("search", parents=[common], help="query a saved index")
    s.add_argument("--base", type=Path, required=True)
    s.add_argument("--query", type=Path, required=True)
    s.add_argument("--graph", type=Path, required=True)
    s.add_argument("--config", type=Path, help="defaults to <graph>.cfg")
    s.add_argument("--k", type=int, default=10)
    s.add_argument("--c", type=int, default=100)
    s.add_argument("--out", type=Path, required=True, help="ivecs result dump")

    r = sub.add_parser("bench", parents=[common, pipeline], help="recall/QPS sweep as CSV")
    r.add_argument("--base", type=Path, required=True)
    r.add_argument("--query", type=Path, required=True)
    r.add_argument("--gt", type=Path, required=True)
    r.add_argument("--k", type=int, default=10)
    r.add_argument("--c", type=_int_list, required=True)
    r.add_argument("--dataset", default=None, help="label for the dataset column")
    r.add_argument("--out", type=Path, help="CSV path (default: stdout)")
    r.add_argument("--json", type=Path, help="optional JSON mirror")

    w = sub.add_parser("sweep", parents=[common, pipeline], help="NDC vs cardinality as CSV")
    w.add_argument("--sizes", type=_int_list, required=True)
    w.add_argument("--dim", type=int, default=32)
    w.add_argument("--clusters", type=int, default=10)
    w.add_argument("--sd", type=float, default=5.0)
    w.add_argument("--queries", type=int, default=1000)
    w.add_argument("--target", type=float, default=0.99)
    w.add_argument("--k", type=int, default=10)
    w.add_argument("--out", type=Path)
    return p


def _set_threads(n):
    if n is None:
        return
    if n < 1:
        raise UsageError("--threads must be >= 1")
    import numba

    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def _pipeline_config(args) -> PipelineConfig:
    if args.config is not None:
        cfg = PipelineConfig.from_text(args.config.read_text())
    elif args.preset is not None:
        cfg = preset(args.preset)
    else:
        raise UsageError("one of --preset or --config is required")
    kw = {}
    if args.seed is not None:
        kw["rng_seed"] = args.seed
    if args.deterministic:
        kw["deterministic"] = True
    return cfg.with_params(**kw) if kw else cfg


def _emit(text, path):
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _cmd_gen(args):
    if args.spec is not None:
        spec = SyntheticSpec.from_text(args.spec.read_text())
    else:
        spec = SyntheticSpec()
    over = {"dim": args.dim, "cardinality": args.n, "clusters": args.clusters,
            "sd": args.sd, "query_count": args.queries, "seed": args.seed}
    spec = SyntheticSpec(**{**spec.__dict__, **{k: v for k, v in over.items() if v is not None}})
    base, queries = generate_synthetic(spec)
    save_vectors(f"{args.out}_base.fvecs", base)
    save_vectors(f"{args.out}_query.fvecs", queries)
    Path(f"{args.out}.spec").write_text(spec.to_text())


def _cmd_gt(args):
    base = load_vectors(args.base, "fvecs")
    queries = load_vectors(args.query, "fvecs", role="query")
    save_vectors(args.out, brute_force_knn(base, queries, args.k), "ivecs")


def _cmd_build(args):
    cfg = _pipeline_config(args)
    base = load_vectors(args.base, "fvecs")
    index = build_index(base, cfg)
    index.graph.save(args.out)
    Path(f"{args.out}.cfg").write_text(cfg.to_text())


def _cmd_search(args):
    cfg_path = args.config or Path(f"{args.graph}.cfg")
    cfg = PipelineConfig.from_text(cfg_path.read_text())
    if args.seed is not None:
        cfg = cfg.with_params(rng_seed=args.seed)
    base = load_vectors(args.base, "fvecs")
    queries = load_vectors(args.query, "fvecs", role="query")
    g = Graph.load(args.graph)
    if g.vertex_count != base.count:
        raise FormatError("graph and base file disagree on the vertex count")
    index = _reindex(g, base, cfg)
    rows = [query(index, q, args.k, args.c)[0] for q in queries.data]
    save_ragged_ivecs(args.out, rows)


def _reindex(g, base, cfg) -> Index:
    # static seeds depend only on the config and graph, so they can be redrawn
    strategy = cfg.seed_strategy()
    seeds = None if strategy.per_query else acquire_seeds(g, base, strategy)
    return Index(graph=g, base=base, config=cfg, seeds=seeds)


def _cmd_bench(args):
    cfg = _pipeline_config(args)
    base = load_vectors(args.base, "fvecs")
    queries = load_vectors(args.query, "fvecs", role="query")
    gt = load_vectors(args.gt, "ivecs")
    if len(gt) != queries.count or gt.k < args.k:
        raise FormatError("ground truth does not cover the queries at this k")
    if int(gt.ids.max()) >= base.count:
        raise FormatError("ground truth refers to ids beyond the base set")
    index = build_index(base, cfg)
    label = args.dataset if args.dataset is not None else args.base.stem
    report = bench.run_benchmark(index, queries, gt, args.k, args.c, dataset=label)
    _emit(report.to_csv(), args.out)
    if args.json is not None:
        args.json.write_text(report.to_json())


def _cmd_sweep(args):
    cfg = _pipeline_config(args)
    spec = SyntheticSpec(dim=args.dim, cardinality=max(args.sizes), clusters=args.clusters,
                         sd=args.sd, query_count=args.queries,
                         seed=1 if args.seed is None else args.seed)
    rows = bench.cardinality_sweep(spec, args.sizes, cfg, args.target, args.k)
    _emit(bench.sweep_to_csv(rows), args.out)


_COMMANDS = {"gen": _cmd_gen, "gt": _cmd_gt, "build": _cmd_build, "search": _cmd_search,
             "bench": _cmd_bench, "sweep": _cmd_sweep}


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
        _set_threads(args.threads)
        _COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except (FormatError, ConfigError, ContractError, ValueError, OSError) as exc:
        print(f"graphann: error: {exc}", file=sys.stderr)
        return 2
    return 0


run = main

if __name__ == "__main__":
    sys.exit(main())
