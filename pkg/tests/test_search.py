import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphann import ContractError, Graph, SeedStrategy, VectorSet, build_exact_knng
from graphann.bench import evaluate_recall
from graphann.construct import init_random
from graphann.search import (
    acquire_seeds,
    backtrack_search,
    best_first_search,
    guided_search,
    linear_scan,
    range_search,
    two_stage_search,
)

from oracles import bfs_reference, l2_seq32, reachable


def vs(rows):
    return VectorSet(np.asarray(rows, np.float32))


def line(*xs):
    return vs([[x] for x in xs])


def chain(n):
    base = line(*range(n))
    src = [v for v in range(n) for u in (v - 1, v + 1) if 0 <= u < n]
    dst = [u for v in range(n) for u in (v - 1, v + 1) if 0 <= u < n]
    return base, Graph.from_edges(n, src, dst, base)


def small_world(seed, n=120, dim=4, k=4):
    r = np.random.default_rng(seed)
    base = vs(r.normal(size=(n, dim)))
    return base, init_random(base, k, seed=seed), r


# ---------------------------------------------------------------- seeds

def test_fixed_seeds_verbatim():
    base, g = chain(10)
    assert acquire_seeds(g, base, SeedStrategy("fixed", fixed_ids=(7,))).tolist() == [7]
    with pytest.raises(ContractError):
        acquire_seeds(g, base, SeedStrategy("fixed", fixed_ids=(10,)))


def test_centroid_seed():
    base = line(0, 10, 5.1)
    g = build_exact_knng(base, 1)
    assert acquire_seeds(g, base, SeedStrategy("centroid")).tolist() == [2]


def test_random_seeds_deterministic_distinct():
    base, g = chain(50)
    s = SeedStrategy("random", count=12, seed=4)
    a, b = acquire_seeds(g, base, s), acquire_seeds(g, base, s)
    assert a.tolist() == b.tolist() and len(set(a.tolist())) == 12
    assert a.max() < 50


def test_per_query_seeds_depend_on_query():
    base, g = chain(500)
    s = SeedStrategy("random", count=5, seed=4, per_query=True)
    q1, q2 = np.array([1.0], np.float32), np.array([2.0], np.float32)
    assert acquire_seeds(g, base, s, q1).tolist() == acquire_seeds(g, base, s, q1).tolist()
    assert acquire_seeds(g, base, s, q1).tolist() != acquire_seeds(g, base, s, q2).tolist()


@pytest.mark.parametrize("kw", [dict(count=0), dict(kind="fixed"), dict(kind="kmeans")])
def test_seed_strategy_invariants(kw):
    with pytest.raises(ContractError):
        SeedStrategy(**kw)


# ---------------------------------------------------------------- best-first

def test_single_vertex_graph():
    base = line(3.0)
    g = Graph.from_lists([[]], [[]])
    ids, tr = best_first_search(g, base, [0.0], 1, [0], 1)
    assert ids.tolist() == [0] and tr.hops == 1 and tr.ndc == 1


def test_complete_graph_gives_exact_nn(rng):
    base = vs(rng.normal(size=(40, 3)))
    g = build_exact_knng(base, 39)
    for q in rng.normal(size=(10, 3)).astype(np.float32):
        ids, _ = best_first_search(g, base, q, 1, [5], 1)
        assert ids[0] == linear_scan(g, base, q, 1)[0][0]


def test_contract_checks():
    base, g = chain(5)
    with pytest.raises(ContractError):
        best_first_search(g, base, [0.0], 1, [0], 2)
    with pytest.raises(ContractError):
        best_first_search(g, base, [0.0], 2, [], 1)
    with pytest.raises(ContractError):
        best_first_search(g, base, [0.0, 1.0], 2, [0], 1)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 30), st.booleans())
def test_routing_matches_reference(seed, c, guided):
    base, g, r = small_world(seed)
    adj = [g.neighbors(v).tolist() for v in range(g.vertex_count)]
    q = r.normal(size=4).astype(np.float32)
    seeds = r.choice(g.vertex_count, size=3).tolist()
    k = min(c, 5)
    route = guided_search if guided else best_first_search
    ids, tr = route(g, base, q, c, seeds, k)
    ref_ids, ndc, hops = bfs_reference(adj, base.data, q, c, seeds, k, guided=guided)
    assert ids.tolist() == ref_ids
    assert (tr.ndc, tr.hops, tr.c) == (ndc, hops, c)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 12), st.sampled_from(["bfs", "guided", "backtrack",
                                                                    "two_stage", "range"]))
def test_results_sorted_distinct_and_sized(seed, k, kind):
    base, g, r = small_world(seed, n=60, k=2)
    adj = [g.neighbors(v).tolist() for v in range(60)]
    q = r.normal(size=4).astype(np.float32)
    seeds = [int(r.integers(60))]
    c = k + 8
    if kind == "bfs":
        ids, tr = best_first_search(g, base, q, c, seeds, k)
    elif kind == "guided":
        ids, tr = guided_search(g, base, q, c, seeds, k)
    elif kind == "backtrack":
        ids, tr = backtrack_search(g, base, q, c, seeds, k, budget=5)
    elif kind == "two_stage":
        ids, tr = two_stage_search(g, base, q, c, seeds, k, stage1_hops=3)
    else:
        ids, tr = range_search(g, base, q, 0.5, seeds, k)
    d = [float(l2_seq32(base.data[v], q)) for v in ids]
    assert list(zip(d, ids.tolist())) == sorted(zip(d, ids.tolist()))
    assert len(set(ids.tolist())) == ids.size
    if kind in ("bfs", "backtrack", "range"):
        assert ids.size == min(k, len(reachable(adj, seeds[0])))
    assert tr.ndc >= ids.size and tr.hops >= 1
    again, tr2 = (best_first_search(g, base, q, c, seeds, k) if kind == "bfs"
                  else (ids, tr))
    assert again.tolist() == ids.tolist() and tr2 == tr


def test_duplicate_seeds_are_deduplicated(rng):
    base, g, r = small_world(3)
    q = r.normal(size=4).astype(np.float32)
    a = best_first_search(g, base, q, 10, [4, 4, 9, 4], 5)
    b = best_first_search(g, base, q, 10, [4, 9], 5)
    assert a[0].tolist() == b[0].tolist() and a[1] == b[1]


def test_seed_equal_to_query():
    base, g = chain(6)
    ids, _ = best_first_search(g, base, base.data[3], 2, [3], 1)
    assert ids.tolist() == [3]


def test_bfs_recall_monotone_in_capacity(desk, desk_index):
    base, queries, gt = desk
    index = desk_index("nsg")
    seeds = index.seeds
    recalls = []
    for c in (10, 20, 50, 100, 200):
        rows = [best_first_search(index.graph, base, q, c, seeds, 10)[0] for q in queries.data]
        recalls.append(evaluate_recall(rows, gt, 10))
    assert all(b >= a for a, b in zip(recalls, recalls[1:]))
    assert recalls[-2] >= 0.95  # c = 100 on the nsg graph


def test_nsg_graph_reaches_target_at_c200(desk, desk_index):
    base, queries, gt = desk
    index = desk_index("nsg")
    rows = [best_first_search(index.graph, base, q, 200, index.seeds, 10)[0] for q in queries.data]
    assert evaluate_recall(rows, gt, 10) >= 0.95


# ---------------------------------------------------------------- guided

def test_guided_chain_walks_right():
    base, g = chain(12)
    ids, tr = guided_search(g, base, [20.0], 1, [3], 1)
    assert ids.tolist() == [11]
    # expansions 3,4,...,11; from each only the rightward neighbor is new
    assert tr.hops == 9 and tr.ndc == 1 + 8 + 1


def test_guided_evaluates_subset(rng):
    base, g, r = small_world(8)
    for _ in range(20):
        q = r.normal(size=4).astype(np.float32)
        s = [int(r.integers(120))]
        assert guided_search(g, base, q, 15, s, 5)[1].ndc <= best_first_search(g, base, q, 15, s, 5)[1].ndc


def test_guided_cheaper_on_desk(desk, desk_index):
    # measured on the MST-union graph, the preset that routes this way
    base, queries, gt = desk
    index = desk_index("hcnng_lite")
    res = {}
    for name, route in (("bfs", best_first_search), ("guided", guided_search)):
        rows, ndc = [], 0
        for q in queries.data:
            ids, tr = route(index.graph, base, q, 100, index.seeds, 10)
            rows.append(ids)
            ndc += tr.ndc
        res[name] = (evaluate_recall(rows, gt, 10), ndc)
    assert res["guided"][1] < res["bfs"][1]
    assert res["guided"][0] >= res["bfs"][0] - 0.05


# ---------------------------------------------------------------- backtrack

def test_backtrack_recovers_missed_neighbor():
    # s=0 at 10 links to a (3, dead end) and b (12) which leads to t (0.1)
    base = line(10, 3, 12, 0.1)
    g = Graph.from_edges(4, [0, 0, 2], [1, 2, 3], base)
    bfs_ids, _ = best_first_search(g, base, [0.0], 1, [0], 1)
    bt_ids, tr = backtrack_search(g, base, [0.0], 1, [0], 1, budget=3)
    assert bfs_ids.tolist() == [1]
    assert bt_ids.tolist() == [3] == linear_scan(g, base, [0.0], 1)[0].tolist()


def test_backtrack_budget_zero_is_bfs(rng):
    base, g, r = small_world(5)
    for _ in range(20):
        q = r.normal(size=4).astype(np.float32)
        a = best_first_search(g, base, q, 8, [0], 4)
        b = backtrack_search(g, base, q, 8, [0], 4, budget=0)
        assert a[0].tolist() == b[0].tolist() and a[1] == b[1]


def test_backtrack_on_converged_instance_only_adds_hops():
    base, g = chain(8)
    a = best_first_search(g, base, [20.0], 2, [0], 1)
    b = backtrack_search(g, base, [20.0], 2, [0], 1, budget=4)
    assert a[0].tolist() == b[0].tolist() == [7]
    assert b[1].hops >= a[1].hops


# ---------------------------------------------------------------- two-stage

def test_two_stage_zero_budget_is_bfs(rng):
    base, g, r = small_world(7)
    for _ in range(20):
        q = r.normal(size=4).astype(np.float32)
        seeds = r.choice(120, size=4).tolist()
        a = best_first_search(g, base, q, 12, seeds, 5)
        b = two_stage_search(g, base, q, 12, seeds, 5, stage1_hops=0)
        assert a[0].tolist() == b[0].tolist() and a[1] == b[1]


def test_two_stage_counts_each_vertex_once(rng):
    base, g, r = small_world(9)
    adj = [g.neighbors(v).tolist() for v in range(120)]
    q = r.normal(size=4).astype(np.float32)
    _, tr = two_stage_search(g, base, q, 20, [0], 5, stage1_hops=4)
    assert tr.ndc <= len(reachable(adj, 0))


# ---------------------------------------------------------------- range

def test_range_star_center():
    base = vs([[0, 0], [1, 0], [-1, 0], [0, 1], [0, -1]])
    g = Graph.from_edges(5, [0] * 4 + [1, 2, 3, 4], [1, 2, 3, 4] + [0] * 4, base)
    ids, tr = range_search(g, base, [0.0, 0.0], 0.0, [0], 1)
    assert ids.tolist() == [0] and tr.hops == 1


def test_range_large_epsilon_exact(rng):
    base, g, r = small_world(2, n=80)
    g = build_exact_knng(base, 20)
    assert reachable([g.neighbors(v).tolist() for v in range(80)], 0) == set(range(80))
    for _ in range(10):
        q = r.normal(size=4).astype(np.float32)
        ids, _ = range_search(g, base, q, 1e6, [0], 3)
        assert ids.tolist() == linear_scan(g, base, q, 3)[0].tolist()


def test_range_epsilon_improves_recall(desk, desk_index):
    base, queries, gt = desk
    index = desk_index("nsg")
    rec = []
    for eps in (0.0, 0.2):
        rows = [range_search(index.graph, base, q, eps, index.seeds, 10)[0] for q in queries.data]
        rec.append(evaluate_recall(rows, gt, 10))
    assert rec[1] >= rec[0]


def test_linear_scan_trace():
    base, g = chain(9)
    ids, tr = linear_scan(g, base, [4.2], 2)
    assert ids.tolist() == [4, 5] and tr.ndc == 9
