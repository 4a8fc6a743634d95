import csv
import io
import subprocess
import sys

import numpy as np
import pytest

from graphann import Graph, SyntheticSpec, brute_force_knn, load_vectors
from graphann.bench import CSV_COLUMNS
from graphann.cli import main
from graphann.core import load_ragged_ivecs


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    prefix = str(d / "toy")
    assert main(["gen", "--dim", "6", "--n", "700", "--clusters", "3", "--sd", "5",
                 "--queries", "30", "--seed", "2", "--out", prefix]) == 0
    assert main(["gt", "--base", f"{prefix}_base.fvecs", "--query", f"{prefix}_query.fvecs",
                 "--k", "10", "--out", f"{prefix}_gt.ivecs"]) == 0
    return d, prefix


def test_gen_writes_pair_and_spec(files):
    d, prefix = files
    base = load_vectors(f"{prefix}_base.fvecs")
    queries = load_vectors(f"{prefix}_query.fvecs", role="query")
    assert base.data.shape == (700, 6) and queries.data.shape == (30, 6)
    spec = SyntheticSpec.from_text(open(f"{prefix}.spec").read())
    assert (spec.dim, spec.cardinality, spec.seed) == (6, 700, 2)


def test_gen_from_spec_file_matches_flags(files, tmp_path):
    _, prefix = files
    assert main(["gen", "--spec", f"{prefix}.spec", "--out", str(tmp_path / "again")]) == 0
    assert (tmp_path / "again_base.fvecs").read_bytes() == open(f"{prefix}_base.fvecs", "rb").read()


def test_gt_matches_brute_force(files):
    _, prefix = files
    gt = load_vectors(f"{prefix}_gt.ivecs")
    base = load_vectors(f"{prefix}_base.fvecs")
    queries = load_vectors(f"{prefix}_query.fvecs", role="query")
    assert gt == brute_force_knn(base, queries, 10)


def test_build_and_search(files, tmp_path):
    _, prefix = files
    g = tmp_path / "oa.gann"
    assert main(["build", "--preset", "oa", "--base", f"{prefix}_base.fvecs",
                 "--out", str(g)]) == 0
    assert Graph.load(g).vertex_count == 700
    out = tmp_path / "res.ivecs"
    assert main(["search", "--base", f"{prefix}_base.fvecs", "--query", f"{prefix}_query.fvecs",
                 "--graph", str(g), "--k", "10", "--c", "40", "--out", str(out)]) == 0
    rows = load_ragged_ivecs(out)
    gt = load_vectors(f"{prefix}_gt.ivecs")
    hits = np.mean([len(set(r.tolist()) & set(t.tolist())) / 10 for r, t in zip(rows, gt.ids)])
    assert len(rows) == 30 and hits > 0.9


def test_build_is_byte_identical(files, tmp_path):
    _, prefix = files
    outs = []
    for i in range(2):
        g = tmp_path / f"g{i}"
        assert main(["build", "--preset", "nssg", "--deterministic", "--seed", "4",
                     "--base", f"{prefix}_base.fvecs", "--out", str(g)]) == 0
        outs.append((g.read_bytes(), open(f"{g}.cfg").read()))
    assert outs[0] == outs[1]


def test_build_from_config_file(files, tmp_path):
    _, prefix = files
    cfg = tmp_path / "exact.cfg"
    cfg.write_text("c1=exact_knng\nc1_k=5\nseeds=centroid\n")
    assert main(["build", "--config", str(cfg), "--base", f"{prefix}_base.fvecs",
                 "--out", str(tmp_path / "e.gann")]) == 0
    assert set(Graph.load(tmp_path / "e.gann").degrees().tolist()) == {5}


def test_bench_csv_stdout(files, capsys):
    _, prefix = files
    assert main(["bench", "--preset", "oa", "--base", f"{prefix}_base.fvecs",
                 "--query", f"{prefix}_query.fvecs", "--gt", f"{prefix}_gt.ivecs",
                 "--k", "10", "--c", "20,50,100,200"]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert len(rows) == 4 and list(rows[0]) == list(CSV_COLUMNS)
    assert rows[0]["dataset"] == "toy_base" and [r["c"] for r in rows] == ["20", "50", "100", "200"]


def test_bench_json_mirror(files, tmp_path):
    import json
    _, prefix = files
    assert main(["bench", "--preset", "kgraph", "--base", f"{prefix}_base.fvecs",
                 "--query", f"{prefix}_query.fvecs", "--gt", f"{prefix}_gt.ivecs",
                 "--c", "10,20", "--dataset", "toy", "--out", str(tmp_path / "r.csv"),
                 "--json", str(tmp_path / "r.json")]) == 0
    js = json.loads((tmp_path / "r.json").read_text())
    assert [r["dataset"] for r in js] == ["toy", "toy"] and list(js[0]) == list(CSV_COLUMNS)


def test_sweep_csv(capsys):
    assert main(["sweep", "--preset", "nsg", "--sizes", "300,600", "--dim", "4",
                 "--queries", "20", "--target", "0.9", "--seed", "3"]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert [r["n"] for r in rows] == ["300", "600"]


@pytest.mark.parametrize("argv", [
    ["build", "--preset", "unknown", "--base", "x.fvecs", "--out", "y"],
    ["build", "--base", "x.fvecs", "--out", "y"],
    ["frobnicate"],
    ["gen", "--out", "z", "--bogus", "1"],
    ["bench", "--preset", "oa", "--base", "a", "--query", "b", "--gt", "c", "--c", "x,y"],
    ["gt", "--base", "a", "--query", "b", "--k", "3", "--out", "c", "--threads", "0"],
])
def test_usage_errors_exit_1(argv, capsys):
    assert main(argv) == 1
    assert capsys.readouterr().err


def test_data_errors_exit_2(files, tmp_path, capsys):
    _, prefix = files
    bad = tmp_path / "bad.fvecs"
    bad.write_bytes(b"\x02\x00\x00\x00\x00\x00\x80?\x00")
    assert main(["gt", "--base", str(bad), "--query", str(bad), "--k", "1",
                 "--out", str(tmp_path / "o")]) == 2
    assert main(["gt", "--base", str(tmp_path / "missing"), "--query", str(bad), "--k", "1",
                 "--out", str(tmp_path / "o")]) == 2
    # graph built on a different base: vertex-count mismatch
    assert main(["gen", "--dim", "6", "--n", "50", "--queries", "2", "--clusters", "2",
                 "--out", str(tmp_path / "other")]) == 0
    assert main(["build", "--preset", "kgraph", "--base", str(tmp_path / "other_base.fvecs"),
                 "--out", str(tmp_path / "o.gann")]) == 0
    assert main(["search", "--base", f"{prefix}_base.fvecs", "--query", f"{prefix}_query.fvecs",
                 "--graph", str(tmp_path / "o.gann"), "--out", str(tmp_path / "r")]) == 2
    cfg = tmp_path / "broken.cfg"
    cfg.write_text("c1=nope\n")
    assert main(["build", "--config", str(cfg), "--base", f"{prefix}_base.fvecs",
                 "--out", str(tmp_path / "b")]) == 2
    assert "error" in capsys.readouterr().err
    assert not (tmp_path / "b").exists()


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "graphann", "build", "--preset", "unknown",
                        "--base", "x", "--out", "y"], capture_output=True, text=True)
    assert r.returncode == 1 and "invalid choice" in r.stderr
