import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_connected_graph
from rgccl.coarsen import CoarsenConfig, Partition, coarsen_features, random_coarsen
from rgccl.encoder import EncoderConfig, init_params
from rgccl.loss import LossConfig, neg_loss, pos_loss, sample_negative_pairs, total_loss
from rgccl.trainer import TrainConfig, loss_and_grad


def _unit(M):
    return M / np.linalg.norm(M, axis=1, keepdims=True)


def test_perfect_alignment():
    Z = _unit(np.random.default_rng(0).standard_normal((7, 3)))
    val, _, _, clamped = pos_loss(Z, Z, beta=2.0)
    assert val == pytest.approx(2.0 / 7) and not clamped


def test_anti_alignment_is_clamped():
    Z = _unit(np.random.default_rng(1).standard_normal((5, 3)))
    val, dZ, dZp, clamped = pos_loss(Z, -Z, beta=1.0, eps_guard=1e-8)
    assert clamped and val == pytest.approx(1e8)
    assert not dZ.any() and not dZp.any()


def test_distance_trace_identity(rng):
    Z, Zp = _unit(rng.standard_normal((9, 4))), _unit(rng.standard_normal((9, 4)))
    tr = np.sum(Z * Zp)
    assert np.sum((Z - Zp) ** 2) == pytest.approx(2 * 9 - 2 * tr, abs=1e-12)


def test_collapsed_embeddings_are_clamped():
    val, dH, clamped = neg_loss(np.ones((4, 2)), np.ones(4), np.array([[0, 1], [2, 3]]), alpha=1.0)
    assert clamped and val == pytest.approx(1e8) and not dH.any()


def test_two_supernode_direct_formula():
    H = np.array([[0.0, 0.0], [2.0, 0.0]])
    val, _, clamped = neg_loss(H, np.array([2, 3]), np.array([[0, 1]]), alpha=6.0)
    assert val == pytest.approx(6.0 / 24) and not clamped


def test_neg_loss_rejects_bad_pairs():
    with pytest.raises(ValueError):
        neg_loss(np.eye(3), np.ones(3), np.array([[1, 1]]), 1.0)
    with pytest.raises(ValueError):
        neg_loss(np.eye(3), np.ones(3), np.array([[0, 3]]), 1.0)


def _fd(f, M, h=1e-6):
    out = np.zeros_like(M)
    for idx in np.ndindex(M.shape):
        old = M[idx]
        M[idx] = old + h
        fp = f()
        M[idx] = old - h
        fm = f()
        M[idx] = old
        out[idx] = (fp - fm) / (2 * h)
    return out


def test_neg_loss_gradient_finite_differences(rng):
    H = rng.standard_normal((6, 3))
    sizes = rng.integers(1, 5, 6)
    pairs = sample_negative_pairs(6, 8, rng)
    _, dH, _ = neg_loss(H, sizes, pairs, 3.0)
    fd = _fd(lambda: neg_loss(H, sizes, pairs, 3.0)[0], H)
    mask = np.abs(dH) > 1e-8
    assert np.max(np.abs(fd - dH)[mask] / np.abs(dH)[mask]) < 1e-5


def test_pos_loss_gradient_finite_differences(rng):
    Z, Zp = rng.standard_normal((5, 3)) + 1.0, rng.standard_normal((5, 3)) + 1.0
    _, dZ, dZp, _ = pos_loss(Z, Zp, 2.0)
    np.testing.assert_allclose(dZ, _fd(lambda: pos_loss(Z, Zp, 2.0)[0], Z), rtol=1e-6)
    np.testing.assert_allclose(dZp, _fd(lambda: pos_loss(Z, Zp, 2.0)[0], Zp), rtol=1e-6)


def _instance(rng, n=12):
    g = random_connected_graph(rng, n, 0.3)
    X = rng.standard_normal((n, 4))
    part, cg = random_coarsen(g, CoarsenConfig(0.5, 4, seed=int(rng.integers(1000))))
    return g, X, part, cg, coarsen_features(g, X, part)


def test_component_isolation(rng):
    Z, H = _unit(rng.standard_normal((8, 3))), _unit(rng.standard_normal((5, 3)))
    part = Partition.from_assignment([0, 0, 1, 2, 3, 3, 4, 4])
    pairs = sample_negative_pairs(5, 5, rng)
    only_pos = total_loss(Z, H, part, pairs, LossConfig(alpha=0.0, beta=3.0))
    assert only_pos.value == pytest.approx(pos_loss(Z, H[part.assign], 3.0)[0]) and only_pos.neg == 0
    only_neg = total_loss(Z, H, part, pairs, LossConfig(alpha=4.0, beta=0.0))
    assert only_neg.value == pytest.approx(neg_loss(H, part.sizes, pairs, 4.0)[0]) and only_neg.pos == 0


def test_weights_scale_terms_exactly(rng):
    Z, H = _unit(rng.standard_normal((6, 3))), _unit(rng.standard_normal((3, 3)))
    part = Partition.from_assignment([0, 0, 1, 1, 2, 2])
    pairs = sample_negative_pairs(3, 3, rng)
    a = total_loss(Z, H, part, pairs, LossConfig(alpha=5.0, beta=7.0))
    b = total_loss(Z, H, part, pairs, LossConfig(alpha=10.0, beta=14.0))
    assert b.neg == 2 * a.neg and b.pos == 2 * a.pos


def _dense_reference_loss(g, X, part, cg, Xc, W, pairs, alpha, beta, k):
    """Naive dense re-implementation: explicit matrices, loops over pairs."""
    def embed(adj, loop, F):
        A = adj + np.diag(loop)
        d = A.sum(axis=1)
        S = A / np.sqrt(np.outer(d, d))
        Y = np.linalg.matrix_power(S, k) @ F @ W
        return Y / np.linalg.norm(Y, axis=1, keepdims=True)

    Z = embed(g.adj.toarray(), np.ones(g.n), X)
    H = embed(cg.graph.adj.toarray(), part.sizes.astype(float), Xc)
    P = np.zeros((g.n, part.num_clusters))
    P[np.arange(g.n), part.assign] = 1
    trace = np.trace(Z.T @ (P @ H))
    spread = sum(part.sizes[i] * part.sizes[j] * np.sum((H[i] - H[j]) ** 2) for i, j in pairs)
    return alpha / spread + beta / trace


def test_full_loss_matches_dense_reimplementation(rng):
    g, X, part, cg, Xc = _instance(rng, 12)
    cfg = TrainConfig(encoder=EncoderConfig(k=2, dim_out=3), loss=LossConfig(alpha=15000.0, beta=500.0))
    params = init_params(4, cfg.encoder, seed=2)
    pairs = sample_negative_pairs(part.num_clusters, part.num_clusters, rng)
    terms, _, _ = loss_and_grad(g, X, params, cfg, part, cg, Xc, pairs)
    ref = _dense_reference_loss(g, X, part, cg, Xc, params.W, pairs, 15000.0, 500.0, 2)
    assert abs(terms.value - ref) <= 1e-10 * max(1.0, abs(ref))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_full_composed_gradient_finite_differences(seed):
    rng = np.random.default_rng(seed)
    g, X, part, cg, Xc = _instance(rng, 10)
    cfg = TrainConfig(encoder=EncoderConfig(k=2, dim_out=3), loss=LossConfig(alpha=2.0, beta=1.5))
    params = init_params(4, cfg.encoder, seed=seed)
    pairs = sample_negative_pairs(part.num_clusters, part.num_clusters, rng)
    _, grads, _ = loss_and_grad(g, X, params, cfg, part, cg, Xc, pairs)
    fd = _fd(lambda: loss_and_grad(g, X, params, cfg, part, cg, Xc, pairs)[0].value, params.weights[0], h=1e-5)
    mask = np.abs(grads[0]) > 1e-8
    assert np.max(np.abs(fd - grads[0])[mask] / np.abs(grads[0])[mask]) < 1e-4


def test_negative_pair_frequencies():
    rng = np.random.default_rng(0)
    counts = dict.fromkeys(itertools.combinations(range(4), 2), 0)
    for _ in range(10_000):
        (i, j), = sample_negative_pairs(4, 1, rng)
        counts[(int(i), int(j))] += 1
    for c in counts.values():
        assert abs(c / 10_000 - 1 / 6) < 0.02


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 300), st.integers(1, 400), st.integers(0, 2**31 - 1))
def test_negative_pairs_distinct_and_valid(n, count, seed):
    pairs = sample_negative_pairs(n, count, np.random.default_rng(seed))
    assert pairs.shape == (min(count, n * (n - 1) // 2), 2)
    assert np.all(pairs[:, 0] < pairs[:, 1]) and pairs.min() >= 0 and pairs.max() < n
    assert len({tuple(p) for p in pairs.tolist()}) == pairs.shape[0]


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.0, 1.0))
def test_moving_toward_z_never_increases_positive_loss(seed, t):
    r = np.random.default_rng(seed)
    Z, Zp = _unit(r.standard_normal((6, 3))), _unit(r.standard_normal((6, 3)))
    if np.sum(Z * Zp) <= 1e-8:
        Zp = _unit(Zp + 2 * Z)
    before = pos_loss(Z, Zp, 1.0)[0]
    after = pos_loss(Z, (1 - t) * Zp + t * Z, 1.0)[0]
    assert after <= before * (1 + 1e-12)


def test_invalid_loss_config():
    for kwargs in (dict(alpha=-1.0), dict(num_neg_pairs=0), dict(eps_guard=0.0)):
        with pytest.raises(ValueError):
            LossConfig(**kwargs)


def test_negative_pairs_need_two_nodes(rng):
    with pytest.raises(ValueError):
        sample_negative_pairs(1, 1, rng)

