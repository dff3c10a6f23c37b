"""Shared-weight linear graph encoder (SGC, with a stacked-GCN variant) and its gradients."""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .coarsen import CoarsenedGraph, Partition, lift
from .graph import SYMMETRIC, Graph, PropagationOperator, normalize, propagate

ACTIVATIONS = ("identity", "relu")
ARCHITECTURES = ("sgc", "gcn")


@dataclass(frozen=True)
class EncoderConfig:
    """``k`` is the number of propagation steps (SGC) or layers (GCN)."""

    k: int = 2
    norm_kind: str = SYMMETRIC
    activation: str = "identity"
    dim_out: int = 512
    row_normalize_output: bool = True
    arch: str = "sgc"

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("k must be non-negative")
        if self.dim_out < 1:
            raise ValueError("dim_out must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if self.arch not in ARCHITECTURES:
            raise ValueError(f"arch must be one of {ARCHITECTURES}")
        if self.arch == "gcn" and self.k < 1:
            raise ValueError("a GCN encoder needs at least one layer")

    def digest(self) -> bytes:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).digest()


@dataclass
class ModelParams:
    weights: list[np.ndarray]
    init_seed: int = 0

    @property
    def W(self) -> np.ndarray:
        return self.weights[0]

    def copy(self) -> "ModelParams":
        return ModelParams([w.copy() for w in self.weights], self.init_seed)

    def spectral_norm(self) -> float:
        """Largest singular value over all weight matrices (the ω diagnostic)."""
        return max(float(np.linalg.norm(w, 2)) for w in self.weights)


def init_params(dim_in: int, cfg: EncoderConfig, seed: int = 0) -> ModelParams:
    """Uniform entries in ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]``."""
    rng = np.random.default_rng(seed)
    if cfg.arch == "sgc":
        shapes = [(dim_in, cfg.dim_out)]
    else:
        shapes = [(dim_in, cfg.dim_out)] + [(cfg.dim_out, cfg.dim_out)] * (cfg.k - 1)
    weights = []
    for fan_in, fan_out in shapes:
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
    return ModelParams(weights, seed)


@dataclass
class Encoding:
    """Forward pass output plus what the backward pass needs."""

    output: np.ndarray
    propagated: np.ndarray
    pre_activations: list[np.ndarray] = field(default_factory=list)
    layer_inputs: list[np.ndarray] = field(default_factory=list)
    norms: np.ndarray | None = None
    zero_rows: int = 0
    op: PropagationOperator | None = None


def _activate(x: np.ndarray, kind: str) -> np.ndarray:
    return np.maximum(x, 0.0) if kind == "relu" else x


def _activation_grad(pre: np.ndarray, upstream: np.ndarray, kind: str) -> np.ndarray:
    return upstream * (pre > 0) if kind == "relu" else upstream


def _row_normalize(Y: np.ndarray):
    norms = np.linalg.norm(Y, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    return Y / safe[:, None], norms


def encode(
    op: PropagationOperator,
    X: np.ndarray,
    params: ModelParams,
    cfg: EncoderConfig,
    propagated: np.ndarray | None = None,
) -> Encoding:
    """``Z = σ(Â^k X W)`` (SGC) or ``k`` stacked ``σ(Â H W)`` layers (GCN), optionally row-normalized.

    ``propagated`` short-circuits the parameter-free first stage (``Â^k X``
    for SGC, ``Â X`` for GCN) when the caller already holds it.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] != op.n:
        raise ValueError(f"features have {X.shape[0]} rows, graph has {op.n} nodes")
    if X.shape[1] != params.W.shape[0]:
        raise ValueError(f"features have {X.shape[1]} columns, weights expect {params.W.shape[0]}")
    steps = cfg.k if cfg.arch == "sgc" else 1
    if propagated is None:
        propagated = propagate(op, X, steps)

    pres, inputs = [], []
    if cfg.arch == "sgc":
        inputs.append(propagated)
        pre = propagated @ params.W
        pres.append(pre)
        out = _activate(pre, cfg.activation)
    else:
        h = propagated
        for layer, W in enumerate(params.weights):
            if layer > 0:
                h = op.apply(h)
            inputs.append(h)
            pre = h @ W
            pres.append(pre)
            last = layer == len(params.weights) - 1
            h = _activate(pre, cfg.activation if last else "relu")
        out = h

    norms = None
    zero_rows = 0
    if cfg.row_normalize_output:
        out, norms = _row_normalize(out)
        zero_rows = int(np.sum(norms == 0))
    return Encoding(out, propagated, pres, inputs, norms, zero_rows, op)


def grad_encode(upstream: np.ndarray, enc: Encoding, params: ModelParams, cfg: EncoderConfig) -> list[np.ndarray]:
    """Gradient of a scalar loss w.r.t. each weight matrix, given ``dL/dZ``."""
    if enc is None or not enc.pre_activations:
        raise ValueError("grad_encode needs the Encoding from a forward pass")
    g = np.asarray(upstream, dtype=np.float64)
    if cfg.row_normalize_output:
        z = enc.output
        safe = np.where(enc.norms > 0, enc.norms, np.inf)
        g = (g - z * np.sum(z * g, axis=1, keepdims=True)) / safe[:, None]

    grads = [None] * len(params.weights)
    for layer in reversed(range(len(params.weights))):
        last = layer == len(params.weights) - 1
        kind = cfg.activation if (last or cfg.arch == "sgc") else "relu"
        g = _activation_grad(enc.pre_activations[layer], g, kind)
        grads[layer] = enc.layer_inputs[layer].T @ g
        if layer > 0:
            g = enc.op.apply_transpose(g @ params.weights[layer].T)
    return grads


@dataclass
class PairEncoding:
    original: Encoding
    coarse: Encoding
    partition: Partition

    @property
    def Z(self) -> np.ndarray:
        return self.original.output

    @property
    def H(self) -> np.ndarray:
        return self.coarse.output

    @property
    def Z_lift(self) -> np.ndarray:
        return lift(self.coarse.output, self.partition)


def encode_pair(
    graphs: tuple[Graph, CoarsenedGraph],
    features: tuple[np.ndarray, np.ndarray],
    part: Partition,
    params: ModelParams,
    cfg: EncoderConfig,
    ops: tuple[PropagationOperator, PropagationOperator] | None = None,
    propagated_original: np.ndarray | None = None,
) -> PairEncoding:
    """Encode both views with the same weights; ``Z' = P H`` is available as ``Z_lift``."""
    graph, cg = graphs
    X, X_coarse = features
    if part.n != graph.n or cg.graph.n != part.num_clusters:
        raise ValueError("partition does not match the graph pair")
    if ops is None:
        ops = (normalize(graph, cfg.norm_kind), normalize(cg.graph, cfg.norm_kind))
    z = encode(ops[0], X, params, cfg, propagated=propagated_original)
    h = encode(ops[1], X_coarse, params, cfg)
    return PairEncoding(z, h, part)


_MAGIC = b"RGCW"
_VERSION = 1


def save_params(path, params: ModelParams, cfg: EncoderConfig) -> None:
    """Binary layout: magic, version, layer count, init seed, config sha256, then per layer rows/cols and row-major little-endian doubles."""
    with open(Path(path), "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IIq", _VERSION, len(params.weights), params.init_seed))
        fh.write(cfg.digest())
        for W in params.weights:
            fh.write(struct.pack("<QQ", *W.shape))
            fh.write(np.ascontiguousarray(W, dtype="<f8").tobytes())


def load_params(path, cfg: EncoderConfig | None = None) -> ModelParams:
    data = Path(path).read_bytes()
    if data[:4] != _MAGIC:
        raise ValueError(f"{path}: not a parameter file")
    version, layers, seed = struct.unpack_from("<IIq", data, 4)
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    offset = 4 + struct.calcsize("<IIq")
    digest = data[offset : offset + 32]
    offset += 32
    if cfg is not None and digest != cfg.digest():
        raise ValueError(f"{path}: encoder config does not match the one used for training")
    weights = []
    for _ in range(layers):
        rows, cols = struct.unpack_from("<QQ", data, offset)
        offset += 16
        count = rows * cols
        W = np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(rows, cols).astype(np.float64)
        offset += 8 * count
        weights.append(W)
    return ModelParams(weights, seed)
