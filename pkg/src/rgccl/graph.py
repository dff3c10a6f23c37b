"""Sparse undirected graphs, normalized propagation operators and dataset files."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

SYMMETRIC = "symmetric"
RANDOM_WALK = "random_walk"
OPERATOR_KINDS = (SYMMETRIC, RANDOM_WALK)


class DatasetError(ValueError):
    """Malformed or inconsistent dataset file."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected weighted graph stored as a symmetric CSR adjacency.

    ``loop_mass`` is the self-loop weight added at normalization time
    (1 per node for simple graphs, cluster size for coarsened graphs), so
    ``self_loop_degrees = degrees + loop_mass``.
    """

    adj: sp.csr_matrix
    loop_mass: np.ndarray
    degrees: np.ndarray = field(init=False)
    self_loop_degrees: np.ndarray = field(init=False)
    duplicate_edges: int = 0

    def __post_init__(self):
        adj = sp.csr_matrix(self.adj, dtype=np.float64)
        adj.sum_duplicates()
        adj.sort_indices()
        if adj.shape[0] != adj.shape[1]:
            raise ValueError(f"adjacency must be square, got {adj.shape}")
        if adj.nnz and adj.data.min() < 0:
            raise ValueError("edge weights must be non-negative")
        loop = np.asarray(self.loop_mass, dtype=np.float64).reshape(-1)
        if loop.shape[0] != adj.shape[0]:
            raise ValueError("loop_mass length must equal node count")
        deg = np.asarray(adj.sum(axis=1)).reshape(-1)
        object.__setattr__(self, "adj", adj)
        object.__setattr__(self, "loop_mass", loop)
        object.__setattr__(self, "degrees", deg)
        object.__setattr__(self, "self_loop_degrees", deg + loop)
        for arr in (adj.data, adj.indices, adj.indptr, loop, deg, self.self_loop_degrees):
            arr.flags.writeable = False

    @property
    def n(self) -> int:
        return self.adj.shape[0]

    @property
    def num_edges(self) -> int:
        """Number of distinct undirected off-diagonal edges."""
        upper = sp.triu(self.adj, k=1)
        return int(upper.nnz)

    def edge_array(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Off-diagonal edges ``(u, v, w)`` with ``u < v``, in row-major order."""
        upper = sp.triu(self.adj, k=1).tocoo()
        order = np.lexsort((upper.col, upper.row))
        return upper.row[order], upper.col[order], upper.data[order]

    def is_connected(self) -> bool:
        if self.n <= 1:
            return True
        ncomp, _ = connected_components(self.adj, directed=False)
        return ncomp == 1

    def to_dense(self) -> np.ndarray:
        return self.adj.toarray()


def build_graph(edges: Iterable[Sequence[float]], n: int, *, allow_self_loops: bool = False) -> Graph:
    """Build a graph from ``(u, v)`` or ``(u, v, w)`` tuples.

    Each undirected pair is kept once; repeated pairs (in either
    orientation) are dropped and counted in ``Graph.duplicate_edges``.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    rows, cols, vals = [], [], []
    seen = set()
    duplicates = 0
    for edge in edges:
        if len(edge) not in (2, 3):
            raise ValueError(f"edge must be (u, v) or (u, v, w), got {edge!r}")
        u, v = int(edge[0]), int(edge[1])
        w = float(edge[2]) if len(edge) == 3 else 1.0
        if not (0 <= u < n and 0 <= v < n):
            raise ValueError(f"edge ({u}, {v}) has node id outside [0, {n})")
        if u == v and not allow_self_loops:
            raise ValueError(f"self-loop on node {u}; self-loops are added by normalization")
        if w < 0 or not np.isfinite(w):
            raise ValueError(f"edge ({u}, {v}) has invalid weight {w}")
        key = (min(u, v), max(u, v))
        if key in seen:
            duplicates += 1
            continue
        seen.add(key)
        rows.append(u)
        cols.append(v)
        vals.append(w)
        if u != v:
            rows.append(v)
            cols.append(u)
            vals.append(w)
    adj = sp.csr_matrix((vals, (rows, cols)), shape=(n, n), dtype=np.float64)
    return Graph(adj=adj, loop_mass=np.ones(n), duplicate_edges=duplicates)


def graph_from_adjacency(adj, loop_mass=None) -> Graph:
    """Wrap an existing symmetric (sparse or dense) adjacency matrix."""
    adj = sp.csr_matrix(adj, dtype=np.float64)
    if (abs(adj - adj.T) > 1e-12).nnz:
        raise ValueError("adjacency must be symmetric")
    if loop_mass is None:
        loop_mass = np.ones(adj.shape[0])
    return Graph(adj=adj, loop_mass=loop_mass)


@dataclass(frozen=True, eq=False)
class PropagationOperator:
    """One step of a normalized adjacency, ``D̃^{-1/2} Ã D̃^{-1/2}`` or ``D̃^{-1} Ã``."""

    kind: str
    graph: Graph
    matrix: sp.csr_matrix
    inv_sqrt_deg: np.ndarray
    self_loops: bool = True

    @property
    def n(self) -> int:
        return self.graph.n

    def apply(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[0] != self.n:
            raise ValueError(f"operator acts on {self.n} rows, got matrix with {X.shape[0]}")
        return self.matrix @ X

    def apply_transpose(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[0] != self.n:
            raise ValueError(f"operator acts on {self.n} rows, got matrix with {X.shape[0]}")
        return self.matrix.T @ X

    def symmetric_matrix(self) -> sp.csr_matrix:
        """The symmetric form similar to this operator (same spectrum)."""
        if self.kind == SYMMETRIC:
            return self.matrix
        return normalize(self.graph, SYMMETRIC, self_loops=self.self_loops).matrix

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()


def normalize(graph: Graph, kind: str = SYMMETRIC, *, self_loops: bool = True) -> PropagationOperator:
    """Normalized propagation operator of ``graph``.

    With ``self_loops`` the operator uses ``Ã = A + diag(loop_mass)`` and
    ``D̃ = D + diag(loop_mass)``; without, plain ``A`` and ``D``.
    """
    if kind not in OPERATOR_KINDS:
        raise ValueError(f"unknown operator kind {kind!r}; expected one of {OPERATOR_KINDS}")
    if graph.n == 0:
        raise ValueError("cannot normalize an empty graph")
    if self_loops:
        a_tilde = graph.adj + sp.diags(graph.loop_mass)
        d_tilde = graph.self_loop_degrees
    else:
        a_tilde = graph.adj
        d_tilde = graph.degrees
    if np.any(d_tilde <= 0):
        bad = int(np.flatnonzero(d_tilde <= 0)[0])
        raise ValueError(f"node {bad} has zero degree; normalization undefined")
    inv_sqrt = 1.0 / np.sqrt(d_tilde)
    if kind == SYMMETRIC:
        mat = sp.diags(inv_sqrt) @ a_tilde @ sp.diags(inv_sqrt)
    else:
        mat = sp.diags(1.0 / d_tilde) @ a_tilde
    mat = sp.csr_matrix(mat)
    mat.sort_indices()
    return PropagationOperator(kind=kind, graph=graph, matrix=mat, inv_sqrt_deg=inv_sqrt, self_loops=self_loops)


def propagate(op: PropagationOperator, X: np.ndarray, k: int) -> np.ndarray:
    """Return ``Â^k X`` by ``k`` successive sparse-dense products."""
    if k < 0:
        raise ValueError("k must be non-negative")
    out = np.array(X, dtype=np.float64, copy=True)
    if out.ndim == 1:
        out = out[:, None]
    if out.shape[0] != op.n:
        raise ValueError(f"operator acts on {op.n} rows, got matrix with {out.shape[0]}")
    for _ in range(k):
        out = op.matrix @ out
    return out


def _parse_edge_file(path: Path) -> list[tuple[int, int, float]]:
    edges = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) not in (2, 3):
                raise DatasetError(f"expected 'u v' or 'u v w', got {line!r}", str(path), lineno)
            try:
                u, v = int(parts[0]), int(parts[1])
                w = float(parts[2]) if len(parts) == 3 else 1.0
            except ValueError:
                raise DatasetError(f"non-numeric field in {line!r}", str(path), lineno) from None
            if u < 0 or v < 0:
                raise DatasetError(f"negative node id in {line!r}", str(path), lineno)
            edges.append((u, v, w, lineno))
    return edges


def load_dataset(edge_file, feature_file, label_file=None):
    """Load ``(Graph, X, labels)``; the node count is the feature row count.

    Edge lines of the form ``i i w`` are accepted as diagonal weight (as
    written for coarsened graphs).
    """
    edge_path, feat_path = Path(edge_file), Path(feature_file)
    try:
        X = np.loadtxt(feat_path, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise DatasetError(f"malformed feature CSV ({exc})", str(feat_path)) from None
    if X.size and not np.all(np.isfinite(X)):
        raise DatasetError("non-finite feature value", str(feat_path))
    n = X.shape[0]
    raw_edges = _parse_edge_file(edge_path)
    for u, v, _, lineno in raw_edges:
        if u >= n or v >= n:
            raise DatasetError(f"node id {max(u, v)} >= node count {n}", str(edge_path), lineno)
    graph = build_graph([(u, v, w) for u, v, w, _ in raw_edges], n, allow_self_loops=True)
    labels = None
    if label_file is not None:
        labels = load_labels(label_file)
        if labels.shape[0] != n:
            raise DatasetError(f"{labels.shape[0]} labels for {n} feature rows", str(label_file))
    return graph, X, labels


def load_labels(path) -> np.ndarray:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                val = int(line)
            except ValueError:
                raise DatasetError(f"expected integer label, got {line!r}", str(path), lineno) from None
            if val < 0:
                raise DatasetError(f"negative label {val}", str(path), lineno)
            out.append(val)
    return np.asarray(out, dtype=np.int64)


def save_dataset(directory, graph: Graph, X: np.ndarray, labels=None, *, stem: str = "") -> dict:
    """Write ``edges.txt``, ``features.csv`` (and ``labels.txt``) into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {
        "edges": directory / f"{stem}edges.txt",
        "features": directory / f"{stem}features.csv",
    }
    rows, cols = sp.triu(graph.adj, k=0).nonzero()
    weights = np.asarray(graph.adj[rows, cols]).reshape(-1)
    order = np.lexsort((cols, rows))
    simple = bool(np.all(weights == 1.0) and np.all(rows != cols))
    with open(paths["edges"], "w", encoding="utf-8") as fh:
        for i in order:
            if simple:
                fh.write(f"{rows[i]} {cols[i]}\n")
            else:
                fh.write(f"{rows[i]} {cols[i]} {weights[i]:.17g}\n")
    with open(paths["features"], "w", encoding="utf-8") as fh:
        for row in np.asarray(X, dtype=np.float64):
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
    if labels is not None:
        paths["labels"] = directory / f"{stem}labels.txt"
        with open(paths["labels"], "w", encoding="utf-8") as fh:
            for v in np.asarray(labels):
                fh.write(f"{int(v)}\n")
    return paths
