"""Training loop: per-epoch re-coarsening, shared encoder, reciprocal loss, Adam or plain descent."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .coarsen import CoarsenConfig, Partition, coarsen_features, random_coarsen
from .encoder import EncoderConfig, ModelParams, encode, grad_encode, init_params
from .graph import Graph, normalize, propagate
from .loss import LossConfig, sample_negative_pairs, total_loss

ADAM = "adam"
SGD = "sgd"

# stream tags for seed derivation
TAG_INIT, TAG_COARSEN, TAG_NEGATIVES = 0, 1, 2


def derive_seed(master_seed: int, epoch: int, tag: int) -> np.random.SeedSequence:
    """Independent stream for (master seed, epoch, purpose)."""
    return np.random.SeedSequence([int(master_seed), int(epoch), int(tag)])


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 25
    learning_rate: float = 0.01
    coarsen: CoarsenConfig = field(default_factory=CoarsenConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    optimizer: str = ADAM
    master_seed: int = 0
    # contrast the original graph with itself and drop the positive term
    negative_only: bool = False

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.optimizer not in (ADAM, SGD):
            raise ValueError(f"optimizer must be {ADAM!r} or {SGD!r}")


PRESETS = {
    "cora": dict(epochs=25, learning_rate=0.01, alpha=15000.0, beta=500.0, ratio=0.3, threshold=10),
    "citeseer": dict(epochs=25, learning_rate=0.01, alpha=15000.0, beta=500.0, ratio=0.3, threshold=10),
}


def preset(name: str, **overrides) -> TrainConfig:
    """Named hyperparameter bundle; keyword overrides replace fields of the top-level config."""
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    p = PRESETS[name]
    cfg = TrainConfig(
        epochs=p["epochs"],
        learning_rate=p["learning_rate"],
        coarsen=CoarsenConfig(ratio=p["ratio"], threshold=p["threshold"]),
        loss=LossConfig(alpha=p["alpha"], beta=p["beta"]),
    )
    return replace(cfg, **overrides)


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    pos: float
    neg: float
    num_supernodes: int
    degenerate_alignment: bool
    collapsed: bool
    zero_rows: int
    wall_time: float

    def deterministic(self) -> tuple:
        d = asdict(self)
        d.pop("wall_time")
        return tuple(d.values())


@dataclass
class TrainTrace:
    records: list[EpochRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def losses(self) -> np.ndarray:
        return np.array([r.loss for r in self.records])

    def to_csv(self) -> str:
        names = list(EpochRecord.__dataclass_fields__)
        lines = [",".join(names)]
        for r in self.records:
            row = []
            for name in names:
                val = getattr(r, name)
                if isinstance(val, bool):
                    row.append(str(int(val)))
                elif isinstance(val, float):
                    row.append(format(val, ".17g"))
                else:
                    row.append(str(val))
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, trace: TrainTrace, params: ModelParams):
        super().__init__(f"non-finite loss at epoch {epoch}")
        self.epoch = epoch
        self.trace = trace
        self.params = params


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = self.v = None
        self.t = 0

    def step(self, weights: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if self.m is None:
            self.m = [np.zeros_like(w) for w in weights]
            self.v = [np.zeros_like(w) for w in weights]
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for w, g, m, v in zip(weights, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            w -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class GradientDescent:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, weights: list[np.ndarray], grads: list[np.ndarray]) -> None:
        for w, g in zip(weights, grads):
            w -= self.lr * g


def _optimizer(cfg: TrainConfig):
    return Adam(cfg.learning_rate) if cfg.optimizer == ADAM else GradientDescent(cfg.learning_rate)


def loss_and_grad(graph, X, params, cfg: TrainConfig, part, cg, X_coarse, pairs, op=None, propagated=None):
    """One full forward/backward pass; returns ``(LossTerms, grads, zero_rows)``."""
    enc_cfg = cfg.encoder
    if op is None:
        op = normalize(graph, enc_cfg.norm_kind)
    z = encode(op, X, params, enc_cfg, propagated=propagated)
    if cfg.negative_only:
        terms = total_loss(z.output, z.output, part, pairs, replace(cfg.loss, beta=0.0))
        upstream = terms.grad_Z + terms.grad_H
        return terms, grad_encode(upstream, z, params, enc_cfg), z.zero_rows
    h = encode(normalize(cg.graph, enc_cfg.norm_kind), X_coarse, params, enc_cfg)
    terms = total_loss(z.output, h.output, part, pairs, cfg.loss)
    gz = grad_encode(terms.grad_Z, z, params, enc_cfg)
    gh = grad_encode(terms.grad_H, h, params, enc_cfg)
    return terms, [a + b for a, b in zip(gz, gh)], z.zero_rows + h.zero_rows


def train(graph: Graph, X: np.ndarray, cfg: TrainConfig, params: ModelParams | None = None):
    """Run ``cfg.epochs`` full-batch steps and return ``(ModelParams, TrainTrace)``.

    Each epoch draws a fresh coarsening and fresh negative pairs from seeds
    derived from ``cfg.master_seed``, so a run is reproducible bit for bit.
    """
    X = np.asarray(X, dtype=np.float64)
    enc_cfg = cfg.encoder
    if params is None:
        init_seed = int(derive_seed(cfg.master_seed, 0, TAG_INIT).generate_state(1)[0])
        params = init_params(X.shape[1], enc_cfg, seed=init_seed)
    else:
        params = params.copy()
    op = normalize(graph, enc_cfg.norm_kind)
    steps = enc_cfg.k if enc_cfg.arch == "sgc" else 1
    propagated = propagate(op, X, steps)
    opt = _optimizer(cfg)
    trace = TrainTrace()
    identity = Partition.identity(graph.n)

    for epoch in range(cfg.epochs):
        start = time.perf_counter()
        if cfg.negative_only:
            part, cg, X_coarse = identity, None, None
        else:
            crng = np.random.default_rng(derive_seed(cfg.master_seed, epoch, TAG_COARSEN))
            part, cg = random_coarsen(graph, cfg.coarsen, rng=crng)
            X_coarse = coarsen_features(graph, X, part)
        nrng = np.random.default_rng(derive_seed(cfg.master_seed, epoch, TAG_NEGATIVES))
        count = cfg.loss.num_neg_pairs or part.num_clusters
        pairs = sample_negative_pairs(part.num_clusters, count, nrng)

        terms, grads, zero_rows = loss_and_grad(graph, X, params, cfg, part, cg, X_coarse, pairs, op, propagated)
        record = EpochRecord(
            epoch=epoch,
            loss=terms.value,
            pos=terms.pos,
            neg=terms.neg,
            num_supernodes=part.num_clusters,
            degenerate_alignment=terms.degenerate_alignment,
            collapsed=terms.collapsed,
            zero_rows=zero_rows,
            wall_time=0.0,
        )
        if not np.isfinite(terms.value) or not all(np.all(np.isfinite(g)) for g in grads):
            record.wall_time = time.perf_counter() - start
            trace.records.append(record)
            raise TrainingDiverged(epoch, trace, params)
        last_good = params.copy()
        opt.step(params.weights, grads)
        if not all(np.all(np.isfinite(w)) for w in params.weights):
            trace.records.append(record)
            raise TrainingDiverged(epoch, trace, last_good)
        record.wall_time = time.perf_counter() - start
        trace.records.append(record)
    return params, trace


def initial_loss(graph: Graph, X: np.ndarray, cfg: TrainConfig, params: ModelParams) -> float:
    """Loss of ``params`` on the epoch-0 coarsening and negatives, without stepping."""
    one = replace(cfg, epochs=1, learning_rate=0.0)
    _, trace = train(graph, X, one, params)
    return trace.records[0].loss

