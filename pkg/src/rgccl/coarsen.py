"""Random edge-contraction coarsening and partition statistics."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.spatial.distance import pdist

from .graph import Graph

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CoarsenConfig:
    ratio: float = 0.3
    threshold: int = 10
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.ratio <= 1.0:
            raise ValueError(f"coarsening ratio must lie in [0, 1], got {self.ratio}")
        if self.threshold < 1:
            raise ValueError(f"size threshold must be >= 1, got {self.threshold}")


@dataclass(frozen=True, eq=False)
class Partition:
    assign: np.ndarray
    sizes: np.ndarray

    @property
    def n(self) -> int:
        return self.assign.shape[0]

    @property
    def num_clusters(self) -> int:
        return self.sizes.shape[0]

    @classmethod
    def from_assignment(cls, assign) -> "Partition":
        """Build from arbitrary cluster labels, relabelled densely in sorted label order."""
        assign = np.asarray(assign)
        _, dense = np.unique(assign, return_inverse=True)
        dense = dense.astype(np.int64).reshape(-1)
        return cls(assign=dense, sizes=np.bincount(dense).astype(np.int64))

    @classmethod
    def identity(cls, n: int) -> "Partition":
        return cls(assign=np.arange(n, dtype=np.int64), sizes=np.ones(n, dtype=np.int64))

    def matrix(self) -> sp.csr_matrix:
        """The binary ``n x n'`` assignment matrix P."""
        return sp.csr_matrix(
            (np.ones(self.n), (np.arange(self.n), self.assign)), shape=(self.n, self.num_clusters)
        )

    def members(self, cluster: int) -> np.ndarray:
        return np.flatnonzero(self.assign == cluster)


@dataclass(frozen=True, eq=False)
class CoarsenedGraph:
    """Supernode graph: adjacency ``P^T A P`` with cluster sizes as self-loop mass."""

    graph: Graph
    partition: Partition

    @property
    def agg_degrees(self) -> np.ndarray:
        return self.graph.self_loop_degrees

    @property
    def sizes(self) -> np.ndarray:
        return self.partition.sizes


class UnionFind:
    """Disjoint sets over ``0..n-1`` with path compression and size tracking.

    The smaller root id survives a union, so every root is its set's
    minimum element.
    """

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, a: int) -> int:
        root = a
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[a] != root:
            self.parent[a], a = root, self.parent[a]
        return root

    def union(self, a: int, b: int) -> int:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return ra
        if rb < ra:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        return ra

    def roots(self) -> np.ndarray:
        return np.array([self.find(i) for i in range(len(self.parent))], dtype=np.int64)


def edge_weights(graph: Graph) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Edges ``(u, v)`` with ``u < v`` and their contraction weights ``1/(d_u + d_v)``."""
    u, v, _ = graph.edge_array()
    d = graph.degrees
    return u, v, 1.0 / (d[u] + d[v])


def weighted_order(weights: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Indices of ``k`` items drawn without replacement, in draw order.

    Equivalent in distribution to drawing one item at a time with
    probability proportional to the remaining weights: each item gets an
    ``Exp(1)/w`` key and the smallest keys are drawn first.
    """
    weights = np.asarray(weights, dtype=np.float64)
    m = weights.shape[0]
    k = min(k, m)
    if k <= 0:
        return np.empty(0, dtype=np.int64)
    keys = rng.standard_exponential(m) / weights
    if k < m:
        head = np.argpartition(keys, k - 1)[:k]
        return head[np.argsort(keys[head], kind="stable")]
    return np.argsort(keys, kind="stable")


def contract_edges(graph: Graph, edge_sequence, threshold: int) -> Partition:
    """Process edges in order; merge endpoint clusters iff they differ and their combined size < threshold."""
    uf = UnionFind(graph.n)
    for u, v in edge_sequence:
        ru, rv = uf.find(int(u)), uf.find(int(v))
        if ru != rv and uf.size[ru] + uf.size[rv] < threshold:
            uf.union(ru, rv)
    return Partition.from_assignment(uf.roots())


def coarsened_graph(graph: Graph, part: Partition) -> CoarsenedGraph:
    """Induced supernode graph.

    Off-diagonal entries count cross-cluster edges, the diagonal holds twice
    the internal edge weight, and ``loop_mass`` is the cluster size so that
    ``Ã' = P^T Ã P`` and ``d̃'_i = sum of d̃_u over the cluster``.
    """
    if part.n != graph.n:
        raise ValueError(f"partition covers {part.n} nodes, graph has {graph.n}")
    P = part.matrix()
    W = sp.csr_matrix(P.T @ graph.adj @ P)
    loop = P.T @ graph.loop_mass
    return CoarsenedGraph(graph=Graph(adj=W, loop_mass=loop), partition=part)


def random_coarsen(graph: Graph, cfg: CoarsenConfig, rng: np.random.Generator | None = None):
    """Random graph coarsening: weighted edge draws then size-capped contraction.

    Draws ``floor(ratio * n)`` distinct edges with probability proportional
    to ``1/(d_u + d_v)`` and contracts them in draw order. Returns
    ``(Partition, CoarsenedGraph)``.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    u, v, w = edge_weights(graph)
    attempts = int(np.floor(cfg.ratio * graph.n))
    if attempts > u.shape[0]:
        log.info("requested %d contraction attempts but graph has %d edges; drawing all", attempts, u.shape[0])
    order = weighted_order(w, attempts, rng)
    part = contract_edges(graph, zip(u[order], v[order]), cfg.threshold)
    return part, coarsened_graph(graph, part)


def coarsen_features(graph: Graph, X: np.ndarray, part: Partition) -> np.ndarray:
    """Degree-weighted cluster means: row i is ``sum d̃_j X_j / sum d̃_j`` over cluster i."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] != graph.n or part.n != graph.n:
        raise ValueError("features, graph and partition must cover the same nodes")
    d = graph.self_loop_degrees
    den = np.bincount(part.assign, weights=d, minlength=part.num_clusters)
    # weights are normalized first so singleton clusters copy their row exactly
    w = d / den[part.assign]
    out = np.zeros((part.num_clusters, X.shape[1]))
    np.add.at(out, part.assign, w[:, None] * X)
    return out


def lift(H: np.ndarray, part: Partition) -> np.ndarray:
    """Row lift ``Z' = P H``: node u receives its supernode's row."""
    return np.asarray(H)[part.assign]


@dataclass(frozen=True)
class PartitionStats:
    """Co-clustering rates; ``matrix[k, l]`` is the fraction of (k, l) pairs sharing a cluster."""

    matrix: np.ndarray

    @property
    def q1(self) -> float:
        return float(self.matrix[0, 0])

    @property
    def q2(self) -> float:
        return float(self.matrix[1, 1])

    @property
    def q12(self) -> float:
        return float(self.matrix[0, 1])

    def to_dict(self) -> dict:
        out = {"matrix": self.matrix.tolist()}
        if self.matrix.shape[0] == 2:
            out.update(q1=self.q1, q2=self.q2, q12=self.q12)
        return out


def _class_counts(assign: np.ndarray, labels: np.ndarray, num_clusters: int, num_classes: int) -> np.ndarray:
    counts = np.zeros((num_clusters, num_classes))
    np.add.at(counts, (assign, labels), 1.0)
    return counts


def partition_stats(part: Partition, labels: np.ndarray, num_classes: int | None = None) -> PartitionStats:
    """Unordered-pair co-clustering rates within and across classes."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape[0] != part.n:
        raise ValueError("labels and partition differ in length")
    K = int(labels.max()) + 1 if num_classes is None else num_classes
    class_sizes = np.bincount(labels, minlength=K).astype(np.float64)
    if np.any(class_sizes < 2):
        raise ValueError("every class needs at least 2 nodes")
    counts = _class_counts(part.assign, labels, part.num_clusters, K)
    together = counts.T @ counts
    pairs = np.outer(class_sizes, class_sizes)
    diag_together = (np.sum(counts * (counts - 1), axis=0)) / 2.0
    np.fill_diagonal(together, diag_together)
    np.fill_diagonal(pairs, class_sizes * (class_sizes - 1) / 2.0)
    return PartitionStats(matrix=together / pairs)


def pair_identity_check(embeddings: np.ndarray, labels: np.ndarray, s: int, trials: int, rng=None) -> dict:
    """Monte-Carlo check of the cluster-spread / pairwise-distance identity.

    Draws ``trials`` uniform partitions into clusters of size ``s`` and
    compares the mean of ``sum_i sum_{u in S_i} s ||f(u) - f(S_i)||^2``
    with ``q1 * sum_C1 + q2 * sum_C2 + q12 * sum_cross`` of squared pair
    distances, using co-clustering rates estimated from the same draws.
    """
    F = np.asarray(embeddings, dtype=np.float64)
    if F.ndim == 1:
        F = F[:, None]
    labels = np.asarray(labels, dtype=np.int64)
    n = F.shape[0]
    if s < 1 or n % s:
        raise ValueError(f"cluster size {s} does not divide n={n}")
    if rng is None:
        rng = np.random.default_rng(0)
    elif isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))

    c1 = labels == 0
    n1, n2 = int(c1.sum()), int((~c1).sum())
    if n1 < 2 or n2 < 2:
        raise ValueError("both classes need at least 2 nodes")

    iu, ju = np.triu_indices(n, k=1)
    pair_d = pdist(F, "sqeuclidean")
    both1 = c1[iu] & c1[ju]
    both2 = ~c1[iu] & ~c1[ju]
    cross = c1[iu] != c1[ju]
    sums = (pair_d[both1].sum(), pair_d[both2].sum(), pair_d[cross].sum())

    lhs_total = 0.0
    co1 = co2 = co12 = 0.0
    batch = 2048
    done = 0
    while done < trials:
        b = min(batch, trials - done)
        perms = rng.permuted(np.tile(np.arange(n), (b, 1)), axis=1)
        groups = F[perms].reshape(b, n // s, s, F.shape[1])
        centre = groups.mean(axis=2, keepdims=True)
        lhs_total += s * np.sum((groups - centre) ** 2)
        cls = c1[perms].reshape(b, n // s, s).sum(axis=2).astype(np.float64)
        other = s - cls
        co1 += np.sum(cls * (cls - 1) / 2.0)
        co2 += np.sum(other * (other - 1) / 2.0)
        co12 += np.sum(cls * other)
        done += b
    q1 = co1 / (trials * n1 * (n1 - 1) / 2.0)
    q2 = co2 / (trials * n2 * (n2 - 1) / 2.0)
    q12 = co12 / (trials * n1 * n2)
    lhs = lhs_total / trials
    rhs = q1 * sums[0] + q2 * sums[1] + q12 * sums[2]
    if rhs == 0.0:
        discrepancy = 0.0 if lhs == 0.0 else float("inf")
    else:
        discrepancy = abs(lhs - rhs) / rhs
    return {"lhs": lhs, "rhs": rhs, "q1": q1, "q2": q2, "q12": q12, "discrepancy": discrepancy}
