import numpy as np
import pytest
from hypothesis import strategies as st

from rgccl.graph import build_graph


def path3():
    return build_graph([(0, 1), (1, 2)], 3)


def triangle():
    return build_graph([(0, 1), (0, 2), (1, 2)], 3)


def cycle(n, offset=0):
    return [(offset + i, offset + (i + 1) % n) for i in range(n)]


def complete(n, offset=0):
    return [(offset + i, offset + j) for i in range(n) for j in range(i + 1, n)]


def random_connected_graph(rng: np.random.Generator, n: int, extra_p: float):
    """Random spanning tree plus Erdos-Renyi extras: always connected."""
    order = rng.permutation(n)
    edges = {(min(a, b), max(a, b)) for a, b in
             ((int(order[i]), int(order[rng.integers(0, i)])) for i in range(1, n))}
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.size) < extra_p
    edges |= set(zip(iu[keep].tolist(), ju[keep].tolist()))
    return build_graph(sorted(edges), n)


@st.composite
def connected_graphs(draw, min_n=2, max_n=25):
    n = draw(st.integers(min_n, max_n))
    seed = draw(st.integers(0, 2**31 - 1))
    p = draw(st.floats(0.0, 0.6))
    return random_connected_graph(np.random.default_rng(seed), n, p)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
