import numpy as np
import pytest

from graphann import SyntheticSpec, brute_force_knn, build_index, generate_synthetic, preset

ACCEPTANCE_LINES = []


def record(line):
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def desk():
    """Desk profile: n=10000, d=32, 10 clusters, sd=5, 1000 queries, seed 1."""
    base, queries = generate_synthetic(SyntheticSpec())
    gt = brute_force_knn(base, queries, 10)
    return base, queries, gt


_built = {}


@pytest.fixture(scope="session")
def desk_index(desk):
    """Cached builder: desk_index(name, rng_seed=0) -> Index."""
    base = desk[0]

    def get(name, rng_seed=0):
        key = (name, rng_seed)
        if key not in _built:
            _built[key] = build_index(base, preset(name).with_params(rng_seed=rng_seed))
        return _built[key]

    return get


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
