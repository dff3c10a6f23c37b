"""Reciprocal contrastive objective over supernode pairs, with analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coarsen import Partition


@dataclass(frozen=True)
class LossConfig:
    """``num_neg_pairs=None`` means one pair per supernode."""

    alpha: float = 15000.0
    beta: float = 500.0
    num_neg_pairs: int | None = None
    neg_seed: int = 0
    eps_guard: float = 1e-8

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        if self.num_neg_pairs is not None and self.num_neg_pairs < 1:
            raise ValueError("num_neg_pairs must be >= 1")
        if self.eps_guard <= 0:
            raise ValueError("eps_guard must be positive")


@dataclass
class LossTerms:
    value: float
    pos: float
    neg: float
    grad_Z: np.ndarray
    grad_H: np.ndarray
    degenerate_alignment: bool = False
    collapsed: bool = False


def sample_negative_pairs(num_nodes: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` distinct unordered pairs ``(i, j)``, ``i < j``, drawn uniformly without replacement.

    Pairs are indexed by their rank in the upper triangle, so sampling is
    done on integers and decoded without materializing all pairs.
    """
    if num_nodes < 2:
        raise ValueError("need at least 2 supernodes to form a pair")
    total = num_nodes * (num_nodes - 1) // 2
    count = min(int(count), total)
    flat = rng.choice(total, size=count, replace=False)
    # rank r -> (i, j): i is the largest row with offset(i) <= r, offset(i) = i*n - i*(i+1)/2
    n = num_nodes

    def row_offset(r):
        return r * n - r * (r + 1) // 2

    i = np.floor(((2 * n - 1) - np.sqrt((2 * n - 1) ** 2 - 8.0 * flat)) / 2).astype(np.int64)
    # floating-point floor can be off by one near row boundaries
    i[flat < row_offset(i)] -= 1
    i[flat >= row_offset(i + 1)] += 1
    j = flat - row_offset(i) + i + 1
    return np.stack([i, j], axis=1)


def pos_loss(Z: np.ndarray, Zp: np.ndarray, beta: float, eps_guard: float = 1e-8):
    """``beta / Tr(Z^T Z')``; returns ``(value, dZ, dZp, clamped)``."""
    Z = np.asarray(Z, dtype=np.float64)
    Zp = np.asarray(Zp, dtype=np.float64)
    if Z.shape != Zp.shape:
        raise ValueError(f"shape mismatch {Z.shape} vs {Zp.shape}")
    tr = float(np.sum(Z * Zp))
    if tr <= eps_guard:
        return beta / eps_guard, np.zeros_like(Z), np.zeros_like(Zp), True
    scale = -beta / tr**2
    return beta / tr, scale * Zp, scale * Z, False


def neg_loss(H: np.ndarray, sizes: np.ndarray, pairs: np.ndarray, alpha: float, eps_guard: float = 1e-8):
    """``alpha / sum n_i n_j ||h_i - h_j||^2`` over the pairs; returns ``(value, dH, clamped)``."""
    H = np.asarray(H, dtype=np.float64)
    sizes = np.asarray(sizes, dtype=np.float64)
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if pairs.size and (pairs.min() < 0 or pairs.max() >= H.shape[0]):
        raise ValueError("pair index out of range")
    if np.any(pairs[:, 0] == pairs[:, 1]):
        raise ValueError("self-pairs are not allowed")
    i, j = pairs[:, 0], pairs[:, 1]
    diff = H[i] - H[j]
    w = sizes[i] * sizes[j]
    S = float(np.sum(w * np.sum(diff**2, axis=1)))
    if S <= eps_guard:
        return alpha / eps_guard, np.zeros_like(H), True
    g = (2.0 * w)[:, None] * diff
    dS = np.zeros_like(H)
    np.add.at(dS, i, g)
    np.add.at(dS, j, -g)
    return alpha / S, (-alpha / S**2) * dS, False


def total_loss(Z, H, part: Partition, pairs: np.ndarray, cfg: LossConfig) -> LossTerms:
    """Sum of both terms with ``Z' = P H``; the positive-term gradient is pulled back onto ``H``."""
    H = np.asarray(H, dtype=np.float64)
    Zp = H[part.assign]
    pos, dZ, dZp, degenerate = pos_loss(Z, Zp, cfg.beta, cfg.eps_guard)
    neg, dH, collapsed = neg_loss(H, part.sizes, pairs, cfg.alpha, cfg.eps_guard)
    np.add.at(dH, part.assign, dZp)
    return LossTerms(pos + neg, pos, neg, dZ, dH, degenerate, collapsed)
