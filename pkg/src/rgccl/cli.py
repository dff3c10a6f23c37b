"""Command-line entry point: ``rgccl <subcommand> [--config PATH] [--seed N] [--out DIR] [overrides]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import coarsen as co
from .config import SCHEMA, ConfigError, RunConfig, csv_text, load_config, write_json
from .csbm import embedding_variance_by_class, sample_csbm
from .encoder import encode, load_params, save_params
from .evaluation import classification_metrics, density_report, split_per_class, train_probe
from .fairness import QdaParams, kappa_sweep, qda_error_closed_form, qda_error_monte_carlo
from .graph import DatasetError, load_dataset, normalize, propagate, save_dataset
from .spectral import coarsening_error_bound, contraction_factor, spectral_report
from .trainer import TrainingDiverged, train

COMMON = ("seed", "out")
DATASET = ("edges", "features", "labels")
GENERATOR = ("n", "p1", "p2", "q", "mu1", "mu2", "sigma", "theory_mode")
COARSEN = ("ratio", "threshold")
MODEL = ("k", "norm_kind", "activation", "dim_out", "row_normalize", "arch")
TRAINING = ("alpha", "beta", "num_neg_pairs", "eps_guard", "epochs", "learning_rate", "optimizer",
            "negative_only", "preset") + COARSEN
PROBE = ("params", "train_per_class", "probe_steps", "probe_lr", "probe_l2")
QDA = ("sigma1", "sigma2", "qda_mu1", "qda_mu2", "samples", "sweep", "sum_sq")

SUBCOMMAND_KEYS = {
    "csbm-gen": COMMON + GENERATOR,
    "coarsen": COMMON + DATASET + COARSEN,
    "train": COMMON + DATASET + MODEL + TRAINING,
    "eval": COMMON + DATASET + MODEL + PROBE,
    "diagnose": COMMON + DATASET + COARSEN + ("k", "bound_k"),
    "qda-fairness": COMMON + QDA,
    "pipeline": COMMON + GENERATOR + MODEL + TRAINING + PROBE[1:] + ("bound_k",),
}

# the bundled pipeline preset: a small two-block graph that runs in seconds
PIPELINE_DEFAULTS = {"n": 200, "dim_out": 64}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rgccl", description="Coarsening-based graph contrastive learning experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND", parser_class=_Parser)
    helps = {
        "csbm-gen": "sample a two-block CSBM dataset",
        "coarsen": "apply one random coarsening to a dataset",
        "train": "train the encoder and write parameters, trace and summary",
        "eval": "probe trained embeddings: accuracy, Macro-F1, gap, MCC, density",
        "diagnose": "spectral report, per-community mixing and propagated variance",
        "qda-fairness": "per-class QDA error and fairness ratio, or a ratio sweep",
        "pipeline": "generate, train, evaluate and diagnose in one run",
    }
    for name, keys in SUBCOMMAND_KEYS.items():
        p = sub.add_parser(name, help=helps[name], description=helps[name])
        p.add_argument("--config", metavar="PATH", help="key=value config file")
        for key in keys:
            p.add_argument(f"--{key.replace('_', '-')}", dest=f"opt_{key}", metavar="VALUE", help=SCHEMA[key][2])
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if args.command == "pipeline":
        for key, value in PIPELINE_DEFAULTS.items():
            cfg.values[key] = value
    if args.config:
        load_config(args.config, cfg)
    for key in SUBCOMMAND_KEYS[args.command]:
        raw = getattr(args, f"opt_{key}")
        if raw is not None:
            cfg.set(key, raw, where=" (command line)")
    cfg.apply_preset()
    return cfg


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.echo(), encoding="utf-8")
    return out


def _load(cfg: RunConfig):
    if not cfg["edges"] or not cfg["features"]:
        raise ConfigError("this subcommand needs 'edges' and 'features'")
    return load_dataset(cfg["edges"], cfg["features"], cfg["labels"])


def majority_labels(labels: np.ndarray, part: co.Partition) -> np.ndarray:
    """Most frequent label per cluster, ties to the smallest label."""
    K = int(labels.max()) + 1
    counts = np.zeros((part.num_clusters, K), dtype=np.int64)
    np.add.at(counts, (part.assign, labels), 1)
    return np.argmax(counts, axis=1)


def cmd_csbm_gen(cfg: RunConfig) -> dict:
    out = _out_dir(cfg)
    params = cfg.csbm_params()
    graph, X, labels = sample_csbm(params)
    paths = save_dataset(out, graph, X, labels)
    summary = {"csbm": params.to_dict(), "num_edges": graph.num_edges, "files": {k: str(v) for k, v in paths.items()}}
    write_json(out / "csbm.json", summary)
    return summary


def cmd_coarsen(cfg: RunConfig) -> dict:
    out = _out_dir(cfg)
    graph, X, labels = _load(cfg)
    part, cg = co.random_coarsen(graph, cfg.coarsen_config())
    X_coarse = co.coarsen_features(graph, X, part)
    coarse_labels = majority_labels(labels, part) if labels is not None else None
    paths = save_dataset(out, cg.graph, X_coarse, coarse_labels)
    (out / "partition.txt").write_text("".join(f"{int(c)}\n" for c in part.assign), encoding="utf-8")
    stats = {
        "num_nodes": graph.n,
        "num_supernodes": part.num_clusters,
        "max_cluster_size": int(part.sizes.max()),
        "cluster_sizes": part.sizes,
    }
    if labels is not None and np.all(np.bincount(labels) >= 2):
        stats["co_clustering"] = co.partition_stats(part, labels).to_dict()
    stats["files"] = {k: str(v) for k, v in paths.items()}
    write_json(out / "stats.json", stats)
    return stats


def _train_summary(params, trace) -> dict:
    return {
        "epochs": len(trace),
        "initial_loss": trace.records[0].loss,
        "final_loss": trace.records[-1].loss,
        "final_pos": trace.records[-1].pos,
        "final_neg": trace.records[-1].neg,
        "spectral_norm": params.spectral_norm(),
        "clamped_epochs": sum(r.degenerate_alignment or r.collapsed for r in trace.records),
    }


def _run_training(cfg: RunConfig, graph, X, out: Path):
    tcfg = cfg.train_config()
    try:
        params, trace = train(graph, X, tcfg)
    except TrainingDiverged as exc:
        (out / "trace.csv").write_text(exc.trace.to_csv(), encoding="utf-8")
        save_params(out / "params.bin", exc.params, tcfg.encoder)
        raise
    (out / "trace.csv").write_text(trace.to_csv(), encoding="utf-8")
    save_params(out / "params.bin", params, tcfg.encoder)
    return tcfg, params, trace


def cmd_train(cfg: RunConfig) -> dict:
    out = _out_dir(cfg)
    graph, X, _ = _load(cfg)
    _, params, trace = _run_training(cfg, graph, X, out)
    summary = _train_summary(params, trace)
    write_json(out / "summary.json", summary)
    return summary


def _evaluate(cfg: RunConfig, graph, X, labels, params) -> dict:
    ecfg = cfg.encoder_config()
    enc = encode(normalize(graph, ecfg.norm_kind), X, params, ecfg)
    train_mask, test_mask = split_per_class(labels, cfg["train_per_class"], cfg["seed"])
    probe = train_probe(enc.output, labels, train_mask, cfg.probe_config())
    metrics = classification_metrics(probe.predict(enc.output), labels, test_mask)
    return {
        "metrics": metrics.to_dict(),
        "density": density_report(enc.output, labels).to_dict(),
        "zero_rows": enc.zero_rows,
    }


def cmd_eval(cfg: RunConfig) -> dict:
    out = _out_dir(cfg)
    graph, X, labels = _load(cfg)
    if labels is None:
        raise ConfigError("eval needs 'labels'")
    if not cfg["params"]:
        raise ConfigError("eval needs 'params'")
    params = load_params(cfg["params"], cfg.encoder_config())
    report = _evaluate(cfg, graph, X, labels, params)
    write_json(out / "metrics.json", report)
    return report


def _diagnose(cfg: RunConfig, graph, X, labels) -> dict:
    report = spectral_report(graph, labels).to_dict()
    report["contraction_factor"] = contraction_factor(normalize(graph))
    if labels is not None:
        op = normalize(graph)
        report["propagated_variance"] = embedding_variance_by_class(propagate(op, X, cfg["k"]), labels)
    if cfg["bound_k"] >= 0:
        part, cg = co.random_coarsen(graph, cfg.coarsen_config())
        check = coarsening_error_bound(graph, X, part, cg, None, cfg["bound_k"], preprocess=True)
        report["coarsening_bound"] = check.to_dict()
    return report


def cmd_diagnose(cfg: RunConfig) -> dict:
    out = _out_dir(cfg)
    graph, X, labels = _load(cfg)
    report = _diagnose(cfg, graph, X, labels)
    write_json(out / "spectral.json", report)
    return report


def _sweep_ratios(text: str) -> np.ndarray:
    try:
        start, stop, count = text.split(":")
        ratios = np.linspace(float(start), float(stop), int(count))
    except ValueError:
        raise ConfigError(f"sweep must look like start:stop:count, got {text!r}") from None
    if ratios.size < 1:
        raise ConfigError("sweep needs at least one point")
    return ratios


def cmd_qda_fairness(cfg: RunConfig) -> dict:
    out = _out_dir(cfg)
    mu1, mu2 = cfg["qda_mu1"], cfg["qda_mu2"]
    if cfg["sweep"]:
        rows = kappa_sweep(_sweep_ratios(cfg["sweep"]), cfg["sum_sq"], mu1, mu2)
        columns = ["ratio", "sigma1", "sigma2", "p1", "p2", "kappa"]
        (out / "kappa_sweep.csv").write_text(csv_text(rows, columns), encoding="utf-8")
        report = {"sum_sq": cfg["sum_sq"], "mu1": mu1, "mu2": mu2, "rows": rows}
        write_json(out / "kappa_sweep.json", report)
        return report
    params = QdaParams(cfg["sigma1"], cfg["sigma2"], mu1, mu2)
    report = {"sigma1": params.sigma1, "sigma2": params.sigma2, "mu1": mu1, "mu2": mu2}
    try:
        report["closed_form"] = qda_error_closed_form(params.sigma1, params.sigma2, mu1, mu2).to_dict()
    except ValueError as exc:
        report["closed_form"] = {"error": str(exc)}
    if cfg["samples"] > 0:
        report["monte_carlo"] = qda_error_monte_carlo(params, cfg["samples"], cfg["seed"]).to_dict()
    write_json(out / "qda.json", report)
    return report


def cmd_pipeline(cfg: RunConfig) -> dict:
    out = _out_dir(cfg)
    csbm = cfg.csbm_params()
    graph, X, labels = sample_csbm(csbm)
    save_dataset(out, graph, X, labels)
    _, params, trace = _run_training(cfg, graph, X, out)
    record = {
        "csbm": csbm.to_dict(),
        "train": _train_summary(params, trace),
        **_evaluate(cfg, graph, X, labels, params),
        "spectral": _diagnose(cfg, graph, X, labels),
    }
    write_json(out / "experiment.json", record)
    return record


COMMANDS = {
    "csbm-gen": cmd_csbm_gen,
    "coarsen": cmd_coarsen,
    "train": cmd_train,
    "eval": cmd_eval,
    "diagnose": cmd_diagnose,
    "qda-fairness": cmd_qda_fairness,
    "pipeline": cmd_pipeline,
}


def _error(kind: str, message: str, command=None, code: int = 1) -> int:
    record = {"error": kind, "message": message, "command": command}
    sys.stderr.write(json.dumps(record) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return _error("usage", str(exc), code=2)
    if args.command is None:
        return _error("usage", "a subcommand is required: " + ", ".join(COMMANDS), code=2)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        COMMANDS[args.command](cfg)
    except ConfigError as exc:
        return _error("config", str(exc), args.command, code=2)
    except DatasetError as exc:
        return _error("dataset", str(exc), args.command)
    except TrainingDiverged as exc:
        return _error("diverged", str(exc), args.command)
    except OSError as exc:
        return _error("io", str(exc), args.command)
    except ValueError as exc:
        return _error("invalid", str(exc), args.command)
    return 0


if __name__ == "__main__":
    sys.exit(main())
