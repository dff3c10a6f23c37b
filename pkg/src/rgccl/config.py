"""Plain-text ``key=value`` run configuration and deterministic JSON/CSV writers."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .coarsen import CoarsenConfig
from .csbm import CsbmParams
from .encoder import EncoderConfig
from .evaluation import ProbeConfig
from .loss import LossConfig
from .trainer import PRESETS, TrainConfig


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _opt_str(text: str):
    return text or None


# key -> (parser, default, help)
SCHEMA: dict[str, tuple] = {
    "seed": (int, 0, "master seed"),
    "out": (str, "out", "output directory"),
    # dataset files
    "edges": (_opt_str, None, "edge list file"),
    "features": (_opt_str, None, "feature CSV"),
    "labels": (_opt_str, None, "label file"),
    # generator
    "n": (int, 400, "CSBM node count"),
    "p1": (float, 0.5, "block-0 edge probability"),
    "p2": (float, 0.05, "block-1 edge probability"),
    "q": (float, 0.01, "cross-block edge probability"),
    "mu1": (_floats, (-1.0, -1.0), "block-0 feature mean, comma separated"),
    "mu2": (_floats, (1.0, 1.0), "block-1 feature mean, comma separated"),
    "sigma": (float, 1.0, "feature noise standard deviation"),
    "theory_mode": (_bool, False, "require q <= p2 <= p1"),
    # coarsening
    "ratio": (float, 0.3, "contraction attempts as a fraction of n"),
    "threshold": (int, 10, "cluster size cap (merge iff combined size < threshold)"),
    # encoder
    "k": (int, 2, "propagation steps or layers"),
    "norm_kind": (str, "symmetric", "symmetric or random_walk"),
    "activation": (str, "identity", "identity or relu"),
    "dim_out": (int, 512, "embedding width"),
    "row_normalize": (_bool, True, "unit-normalize embedding rows"),
    "arch": (str, "sgc", "sgc or gcn"),
    # loss and training
    "alpha": (float, 15000.0, "negative-term weight"),
    "beta": (float, 500.0, "positive-term weight"),
    "num_neg_pairs": (int, 0, "negative pairs per epoch (0: one per supernode)"),
    "eps_guard": (float, 1e-8, "denominator clamp"),
    "epochs": (int, 25, "training epochs"),
    "learning_rate": (float, 0.01, "step size"),
    "optimizer": (str, "adam", "adam or sgd"),
    "negative_only": (_bool, False, "train with the negative term on the original graph only"),
    "preset": (_opt_str, None, f"hyperparameter preset ({', '.join(sorted(PRESETS))})"),
    # evaluation
    "params": (_opt_str, None, "trained parameter file"),
    "train_per_class": (int, 20, "labelled training nodes per class"),
    "probe_steps": (int, 500, "probe gradient steps"),
    "probe_lr": (float, 0.1, "probe step size"),
    "probe_l2": (float, 1e-4, "probe L2 penalty"),
    # diagnostics
    "bound_k": (int, -1, "propagation depth for the coarsening error bound (-1: skip)"),
    # fairness
    "sigma1": (float, 1.0, "class-1 standard deviation"),
    "sigma2": (float, 2.0, "class-2 standard deviation"),
    "qda_mu1": (float, 1.0, "class-1 mean"),
    "qda_mu2": (float, -1.0, "class-2 mean"),
    "samples": (int, 1_000_000, "Monte-Carlo samples per class (0: skip)"),
    "sweep": (str, "", "ratio sweep start:stop:count"),
    "sum_sq": (float, 2.0, "sigma1^2 + sigma2^2 held fixed in the sweep"),
}

PRESET_KEYS = ("epochs", "learning_rate", "alpha", "beta", "ratio", "threshold")


def _format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".17g")
    if isinstance(value, tuple):
        return ",".join(format(v, ".17g") for v in value)
    return str(value)


@dataclass
class RunConfig:
    values: dict = field(default_factory=lambda: {k: entry[1] for k, entry in SCHEMA.items()})
    explicit: set = field(default_factory=set)

    def __getitem__(self, key):
        return self.values[key]

    def set(self, key: str, raw, *, where: str = "") -> None:
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}{where}")
        parser = SCHEMA[key][0]
        try:
            value = parser(raw) if isinstance(raw, str) else raw
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}{where}: {exc}") from None
        self.values[key] = value
        self.explicit.add(key)

    def apply_preset(self) -> None:
        name = self.values["preset"]
        if name is None:
            return
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}")
        for key in PRESET_KEYS:
            if key not in self.explicit:
                self.values[key] = PRESETS[name][key]

    def echo(self) -> str:
        return "".join(f"{k}={_format_value(self.values[k])}\n" for k in sorted(self.values))

    def csbm_params(self) -> CsbmParams:
        v = self.values
        return CsbmParams(n=v["n"], p1=v["p1"], p2=v["p2"], q=v["q"], mu1=v["mu1"], mu2=v["mu2"],
                          sigma=v["sigma"], seed=v["seed"], theory_mode=v["theory_mode"])

    def coarsen_config(self) -> CoarsenConfig:
        return CoarsenConfig(ratio=self.values["ratio"], threshold=self.values["threshold"], seed=self.values["seed"])

    def encoder_config(self) -> EncoderConfig:
        v = self.values
        return EncoderConfig(k=v["k"], norm_kind=v["norm_kind"], activation=v["activation"], dim_out=v["dim_out"],
                             row_normalize_output=v["row_normalize"], arch=v["arch"])

    def loss_config(self) -> LossConfig:
        v = self.values
        return LossConfig(alpha=v["alpha"], beta=v["beta"], num_neg_pairs=v["num_neg_pairs"] or None,
                          neg_seed=v["seed"], eps_guard=v["eps_guard"])

    def train_config(self) -> TrainConfig:
        v = self.values
        return TrainConfig(epochs=v["epochs"], learning_rate=v["learning_rate"], coarsen=self.coarsen_config(),
                           loss=self.loss_config(), encoder=self.encoder_config(), optimizer=v["optimizer"],
                           master_seed=v["seed"], negative_only=v["negative_only"])

    def probe_config(self) -> ProbeConfig:
        v = self.values
        return ProbeConfig(steps=v["probe_steps"], lr=v["probe_lr"], l2=v["probe_l2"], seed=v["seed"])


def parse_config_text(text: str, cfg: RunConfig | None = None, source: str = "<config>") -> RunConfig:
    """Parse ``key=value`` lines; ``#`` starts a comment, blank lines are skipped."""
    cfg = cfg or RunConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        cfg.set(key, value, where=f" at {source}:{lineno}")
    return cfg


def load_config(path, cfg: RunConfig | None = None) -> RunConfig:
    return parse_config_text(Path(path).read_text(encoding="utf-8"), cfg, source=str(path))


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def _emit(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_emit(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(_emit(v, indent, level + 1) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _emit(v, indent, level + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, float):
        # JSON has no infinities or NaN
        return format(obj, ".17g") if math.isfinite(obj) else "null"
    if isinstance(obj, int):
        return str(obj)
    return json.dumps(str(obj))


def dumps_json(obj, indent: int = 2) -> str:
    """JSON text with every float written to 17 significant digits, newline-terminated."""
    return _emit(_plain(obj), indent, 0) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps_json(obj), encoding="utf-8")


def csv_text(rows: list[dict], columns: list[str]) -> str:
    out = [",".join(columns)]
    for row in rows:
        out.append(",".join(_format_value(row[c]) if not isinstance(row[c], bool) else str(int(row[c]))
                            for c in columns))
    return "\n".join(out) + "\n"
