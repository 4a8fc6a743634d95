import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphann import (
    ContractError,
    Graph,
    VectorSet,
    brute_force_knn,
    build_exact_knng,
    connected_components,
    degree_stats,
    graph_quality,
)
from graphann.graph import graph_stats, nearest_neighbor_rate

from oracles import union_find_components


def vs(rows):
    return VectorSet(np.asarray(rows, np.float32))


def test_exact_knng_two_points():
    g = build_exact_knng(vs([[0.0], [1.0]]), 1)
    assert g.to_lists()[0] == [[1], [0]]


def test_exact_knng_collinear():
    g = build_exact_knng(vs([[0.0], [1.0], [3.0]]), 1)
    assert [list(g.neighbors(v)) for v in range(3)] == [[1], [0], [1]]


def test_exact_knng_matches_brute_force(rng):
    base = vs(rng.normal(size=(300, 6)))
    g = build_exact_knng(base, 10)
    gt = brute_force_knn(base, VectorSet(base.data, "query"), 11)
    for v in range(300):
        row = [u for u in gt.ids[v] if u != v][:10]
        assert list(g.neighbors(v)) == row
    g.validate(base)


def test_exact_knng_k_too_large():
    with pytest.raises(ContractError):
        build_exact_knng(vs([[0.0], [1.0]]), 2)


@settings(max_examples=20, deadline=None)
@given(st.integers(3, 60), st.integers(0, 2**31))
def test_exact_knng_quality_is_one(n, seed):
    r = np.random.default_rng(seed)
    base = vs(r.normal(size=(n, 3)))
    k = int(r.integers(1, n))
    assert graph_quality(build_exact_knng(base, k), build_exact_knng(base, k)) == 1.0


def test_graph_quality_cases():
    base = vs([[0.0], [1.0], [3.0], [7.0]])
    exact = build_exact_knng(base, 2)  # 8 directed edges
    assert graph_quality(exact, exact) == 1.0
    empty = Graph.from_lists([[]] * 4, [[]] * 4)
    assert graph_quality(empty, exact) == 0.0
    lists = [list(exact.neighbors(v)) for v in range(4)]
    lists[0], lists[3] = lists[0][:1], lists[3][:1]  # drop two edges
    g = Graph.from_edges(4, [v for v in range(4) for _ in lists[v]],
                         [u for v in range(4) for u in lists[v]], base)
    assert graph_quality(g, exact) == 0.75


def test_graph_quality_size_mismatch():
    a = build_exact_knng(vs([[0.0], [1.0], [2.0]]), 1)
    b = build_exact_knng(vs([[0.0], [1.0]]), 1)
    with pytest.raises(ContractError):
        graph_quality(a, b)


def test_nearest_neighbor_rate():
    base = vs([[0.0], [1.0], [3.0]])
    exact = build_exact_knng(base, 1)
    g = Graph.from_edges(3, [0, 1, 2], [2, 0, 0], base)
    assert nearest_neighbor_rate(g, exact) == pytest.approx(1 / 3)


def test_degree_stats_fixed_k(rng):
    # fixed-K graphs have AD = K, as for the 40-neighbor KNNG
    g = build_exact_knng(vs(rng.normal(size=(100, 3))), 40)
    assert degree_stats(g) == (40.0, 40, 40)


def test_degree_stats_empty_vertex():
    g = Graph.from_lists([[1], [], [0]], [[1.0], [], [1.0]])
    ad, dmax, dmin = degree_stats(g)
    assert (dmin, dmax) == (0, 1) and ad == pytest.approx(2 / 3)


def test_degree_stats_recount(rng):
    n = 120
    lists = [sorted(rng.choice([u for u in range(n) if u != v], size=int(rng.integers(0, 9)),
                               replace=False).tolist()) for v in range(n)]
    g = Graph.from_lists(lists, [[1.0] * len(l) for l in lists])
    deg = [len(l) for l in lists]
    assert degree_stats(g) == (sum(deg) / n, max(deg), min(deg))


def test_cc_two_cliques():
    g = Graph.from_lists([[1], [0], [3], [2]], [[1.0]] * 4)
    assert connected_components(g) == 2


def _random_graph(seed, n):
    r = random.Random(seed)
    lists = [sorted(r.sample([u for u in range(n) if u != v], r.randint(0, 2))) for v in range(n)]
    return lists


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 80))
def test_cc_matches_union_find(seed, n):
    lists = _random_graph(seed, n) if n > 2 else [[] for _ in range(n)]
    g = Graph.from_lists(lists, [[1.0] * len(l) for l in lists])
    edges = [(v, u) for v, l in enumerate(lists) for u in l]
    assert connected_components(g) == union_find_components(n, edges)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_cc_invariant_under_adjacency_order(seed):
    lists = _random_graph(seed, 40)
    r = random.Random(seed + 1)
    shuffled = [r.sample(l, len(l)) for l in lists]
    a = Graph.from_lists(lists, [[1.0] * len(l) for l in lists])
    b = Graph.from_lists(shuffled, [[1.0] * len(l) for l in shuffled], sort=False)
    assert connected_components(a) == connected_components(b)


def test_graph_stats_invariants(rng):
    base = vs(rng.normal(size=(50, 2)))
    s = graph_stats(build_exact_knng(base, 3))
    assert s.d_min <= s.ad <= s.d_max and s.cc >= 1


def test_validator_catches_violations():
    base = vs([[0.0], [1.0], [2.0]])
    with pytest.raises(ContractError):
        Graph.from_lists([[0], [], []], [[0.0], [], []]).validate()
    with pytest.raises(ContractError):
        Graph.from_lists([[1, 2], [], []], [[2.0, 1.0], [], []], sort=False).validate()
    with pytest.raises(ContractError):
        Graph.from_lists([[1], [], []], [[5.0], [], []]).validate(base)


def test_save_load_round_trip(tmp_path, rng):
    base = vs(rng.normal(size=(60, 3)))
    g = build_exact_knng(base, 5)
    g.save(tmp_path / "g.bin")
    raw = (tmp_path / "g.bin").read_bytes()
    assert raw[:4] == b"GANN"
    assert Graph.load(tmp_path / "g.bin") == g
    g.save_ivecs(tmp_path / "g.ivecs")
    from graphann.core import load_ragged_ivecs
    assert [r.tolist() for r in load_ragged_ivecs(tmp_path / "g.ivecs")] == \
        [list(g.neighbors(v)) for v in range(60)]


def test_load_rejects_garbage(tmp_path):
    from graphann import FormatError
    (tmp_path / "x").write_bytes(b"NOPE" + b"\x00" * 8)
    with pytest.raises(FormatError):
        Graph.load(tmp_path / "x")
