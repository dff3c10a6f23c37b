"""Spectral diagnostics: second eigenvalue, subspace distance, coarsening error bound."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .coarsen import CoarsenedGraph, Partition
from .graph import RANDOM_WALK, SYMMETRIC, Graph, PropagationOperator, normalize, propagate

DENSE_LIMIT = 512
BOUND_SLACK = 1e-12


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, iterate: np.ndarray, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.iterate = iterate
        self.residual = residual


@dataclass
class SpectralReport:
    lambda1: float
    lambda2: float
    lambda_min: float
    dominant_vec: np.ndarray
    per_community: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "lambda_min": self.lambda_min,
            "dominant_vec": np.asarray(self.dominant_vec).tolist(),
            "per_community": [
                {"community": c, "lambda2": lam, "flagged": flag} for c, lam, flag in self.per_community
            ],
        }


def _symmetric(op_or_graph) -> sp.csr_matrix:
    if isinstance(op_or_graph, Graph):
        return normalize(op_or_graph, SYMMETRIC).matrix
    return op_or_graph.symmetric_matrix()


def dominant_vector(op: PropagationOperator) -> np.ndarray:
    """Unit top eigenvector of the symmetric form: proportional to sqrt(d̃)."""
    g = op.graph
    d = g.self_loop_degrees if op.self_loops else g.degrees
    u = np.sqrt(d)
    return u / np.linalg.norm(u)


def _power_lambda2(S: sp.csr_matrix, u: np.ndarray, tol: float, max_iter: int, seed: int):
    # S + I is PSD (spectrum of S lies in [-1, 1]); iterate it on u-perp.
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(S.shape[0])
    v -= u * (u @ v)
    v /= np.linalg.norm(v)
    theta = 0.0
    residual = np.inf
    for _ in range(max_iter):
        w = S @ v
        w -= u * (u @ w)
        theta = float(v @ w)
        residual = float(np.linalg.norm(w - theta * v))
        if residual < tol:
            return theta, v
        w += v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return -1.0, v
        v = w / norm
    raise ConvergenceError("power iteration did not converge", v, residual)


def lambda2(
    op: PropagationOperator,
    method: str = "auto",
    tol: float = 1e-9,
    max_iter: int = 100_000,
    seed: int = 0,
) -> float:
    """Second-largest (signed) eigenvalue of the symmetric normalization.

    ``method`` is ``"dense"``, ``"power"`` or ``"auto"`` (dense up to 512
    nodes). The random-walk form is similar to the symmetric one, so both
    kinds share a spectrum.
    """
    if op.n < 2:
        raise ValueError("lambda2 needs at least 2 nodes")
    S = _symmetric(op)
    if method == "auto":
        method = "dense" if op.n <= DENSE_LIMIT else "power"
    if method == "dense":
        return float(np.linalg.eigvalsh(S.toarray())[-2])
    if method == "power":
        theta, _ = _power_lambda2(S, dominant_vector(op), tol, max_iter, seed)
        return theta
    raise ValueError(f"unknown method {method!r}")


def spectrum_extremes(op: PropagationOperator) -> tuple[float, float, float]:
    """``(lambda1, lambda2, lambda_min)`` of the symmetric form (dense)."""
    vals = np.linalg.eigvalsh(_symmetric(op).toarray())
    lam2 = float(vals[-2]) if vals.size > 1 else float("nan")
    return float(vals[-1]), lam2, float(vals[0])


def contraction_factor(op: PropagationOperator) -> float:
    _, lam2, lam_min = spectrum_extremes(op)
    return max(lam2, abs(lam_min))


def subspace_distance(Z: np.ndarray, dominant_vec: np.ndarray) -> float:
    """Frobenius distance from ``Z`` to ``span(u) ⊗ R^d``: ``||Z - u u^T Z||_F``."""
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim == 1:
        Z = Z[:, None]
    u = np.asarray(dominant_vec, dtype=np.float64).reshape(-1)
    if u.shape[0] != Z.shape[0]:
        raise ValueError(f"vector length {u.shape[0]} does not match {Z.shape[0]} rows")
    return float(np.linalg.norm(Z - np.outer(u, u @ Z)))


def _induced(graph: Graph, nodes: np.ndarray) -> Graph:
    sub = graph.adj[nodes][:, nodes]
    return Graph(adj=sub, loop_mass=graph.loop_mass[nodes])


def community_lambda2(graph: Graph, labels: np.ndarray) -> list[tuple[int, float, bool]]:
    """``(community, lambda2, flagged)`` for each community's standalone induced subgraph.

    Communities with fewer than 2 nodes report 0 and are flagged.
    """
    labels = np.asarray(labels)
    out = []
    for c in np.unique(labels):
        nodes = np.flatnonzero(labels == c)
        if nodes.size < 2:
            out.append((int(c), 0.0, True))
            continue
        sub = _induced(graph, nodes)
        out.append((int(c), lambda2(normalize(sub, SYMMETRIC)), False))
    return out


def spectral_report(graph: Graph, labels=None) -> SpectralReport:
    op = normalize(graph, SYMMETRIC)
    lam1, lam2, lam_min = spectrum_extremes(op)
    return SpectralReport(
        lambda1=lam1,
        lambda2=lam2,
        lambda_min=lam_min,
        dominant_vec=dominant_vector(op),
        per_community=community_lambda2(graph, labels) if labels is not None else [],
    )


@dataclass
class BoundCheck:
    lhs_max: float
    rhs_bound: float
    lambda2: float
    lambda2_coarse: float
    connected: bool

    @property
    def holds(self) -> bool:
        # absolute slack for round-off when the bound is exactly zero (lambda2 = 0)
        return self.lhs_max <= self.rhs_bound + BOUND_SLACK

    def to_dict(self) -> dict:
        return {
            "lhs_max": self.lhs_max,
            "rhs_bound": self.rhs_bound,
            "lambda2": self.lambda2,
            "lambda2_coarse": self.lambda2_coarse,
            "connected": self.connected,
            "holds": self.holds,
        }


def unit_rows(X: np.ndarray) -> np.ndarray:
    """Make features non-negative with unit-norm rows (absolute value, then row scaling)."""
    X = np.abs(np.asarray(X, dtype=np.float64))
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("cannot unit-normalize a zero feature row")
    return X / norms


def coarsening_error_bound(
    graph: Graph,
    X: np.ndarray,
    part: Partition,
    cg: CoarsenedGraph,
    X_coarse: np.ndarray,
    k: int,
    *,
    preprocess: bool = False,
) -> BoundCheck:
    """Compare ``max_u ||(Â^k X)_u - (Â'^k X')_{I_u}||`` with ``sqrt(dmax/dmin)(n λ2^k + n' λ2'^k)``.

    Both operators are random-walk normalized. ``X`` must be non-negative
    with unit rows; pass ``preprocess=True`` to enforce that (``X_coarse``
    is then recomputed from it).
    """
    from .coarsen import coarsen_features

    if preprocess:
        X = unit_rows(X)
        X_coarse = coarsen_features(graph, X, part)
    X = np.asarray(X, dtype=np.float64)
    if np.any(X < 0) or not np.allclose(np.linalg.norm(X, axis=1), 1.0, atol=1e-12):
        raise ValueError("features must be non-negative with unit-norm rows")
    op = normalize(graph, RANDOM_WALK)
    op_c = normalize(cg.graph, RANDOM_WALK)
    fine = propagate(op, X, k)
    coarse = propagate(op_c, X_coarse, k)
    lhs = float(np.max(np.linalg.norm(fine - coarse[part.assign], axis=1)))

    lam2 = lambda2(op) if graph.n > 1 else 0.0
    lam2_c = lambda2(op_c) if cg.graph.n > 1 else 0.0
    degs = np.concatenate([graph.self_loop_degrees, cg.graph.self_loop_degrees])
    ratio = np.sqrt(degs.max() / degs.min())
    rhs = float(ratio * (graph.n * abs(lam2) ** k + cg.graph.n * abs(lam2_c) ** k))
    return BoundCheck(lhs, rhs, lam2, lam2_c, graph.is_connected())
