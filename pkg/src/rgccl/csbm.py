"""Two-block contextual stochastic block model (CSBM) sampler."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp

from .graph import Graph, PropagationOperator, propagate


@dataclass(frozen=True)
class CsbmParams:
    n: int
    p1: float
    p2: float
    q: float
    mu1: tuple[float, ...] = (-1.0, -1.0)
    mu2: tuple[float, ...] = (1.0, 1.0)
    sigma: float = 1.0
    seed: int = 0
    theory_mode: bool = False

    def __post_init__(self):
        object.__setattr__(self, "mu1", tuple(float(v) for v in np.atleast_1d(self.mu1)))
        object.__setattr__(self, "mu2", tuple(float(v) for v in np.atleast_1d(self.mu2)))
        if self.n <= 0 or self.n % 2:
            raise ValueError(f"n must be a positive even number, got {self.n}")
        for name in ("p1", "p2", "q"):
            val = getattr(self, name)
            if not 0.0 <= val <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {val}")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if len(self.mu1) != len(self.mu2):
            raise ValueError("mu1 and mu2 must have the same dimension")
        if self.theory_mode and not (self.q <= self.p2 <= self.p1):
            raise ValueError("theory mode requires q <= p2 <= p1")

    @property
    def dim(self) -> int:
        return len(self.mu1)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mu1"] = list(self.mu1)
        d["mu2"] = list(self.mu2)
        return d


def sample_csbm(params: CsbmParams):
    """Draw ``(graph, X, labels)``; nodes ``0..n/2-1`` form block 0.

    Every unordered pair gets one Bernoulli draw with the probability of its
    block pair; features are ``N(mu_c, sigma^2 I)``.
    """
    rng = np.random.default_rng(params.seed)
    n, half = params.n, params.n // 2
    labels = np.repeat(np.array([0, 1], dtype=np.int64), half)

    iu, ju = np.triu_indices(n, k=1)
    block_i, block_j = labels[iu], labels[ju]
    prob = np.where(
        block_i != block_j,
        params.q,
        np.where(block_i == 0, params.p1, params.p2),
    )
    keep = rng.random(iu.shape[0]) < prob
    rows, cols = iu[keep], ju[keep]
    adj = sp.csr_matrix(
        (np.ones(2 * rows.size), (np.concatenate([rows, cols]), np.concatenate([cols, rows]))),
        shape=(n, n),
    )
    graph = Graph(adj=adj, loop_mass=np.ones(n))

    means = np.where(labels[:, None] == 0, np.asarray(params.mu1)[None, :], np.asarray(params.mu2)[None, :])
    X = means + params.sigma * rng.standard_normal((n, params.dim))
    return graph, X, labels


def embedding_variance_by_class(Z: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Mean squared distance of each class's rows from the class centroid."""
    Z = np.asarray(Z, dtype=np.float64)
    labels = np.asarray(labels)
    if Z.ndim == 1:
        Z = Z[:, None]
    if Z.shape[0] != labels.shape[0]:
        raise ValueError("embedding rows and labels differ in length")
    num_classes = int(labels.max()) + 1 if labels.size else 0
    out = np.empty(num_classes)
    for c in range(num_classes):
        rows = Z[labels == c]
        if rows.shape[0] == 0:
            raise ValueError(f"class {c} is empty")
        out[c] = np.mean(np.sum((rows - rows.mean(axis=0)) ** 2, axis=1))
    return out


def propagated_variance(op: PropagationOperator, X: np.ndarray, labels: np.ndarray, k: int = 2) -> np.ndarray:
    """Per-class variance of ``Â^k X`` for the given operator."""
    return embedding_variance_by_class(propagate(op, X, k), labels)
