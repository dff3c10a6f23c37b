"""Linear probe, per-class classification metrics and community density statistics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_softmax, softmax


@dataclass(frozen=True)
class ProbeConfig:
    steps: int = 500
    lr: float = 0.1
    l2: float = 1e-4
    seed: int = 0


@dataclass
class ClassifierParams:
    W: np.ndarray
    b: np.ndarray
    config: ProbeConfig

    def logits(self, Z: np.ndarray) -> np.ndarray:
        return np.asarray(Z, dtype=np.float64) @ self.W + self.b

    def predict(self, Z: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(Z), axis=1)


def train_probe(Z: np.ndarray, labels: np.ndarray, train_mask: np.ndarray, cfg: ProbeConfig = ProbeConfig(),
                num_classes: int | None = None) -> ClassifierParams:
    """Multinomial logistic regression by full-batch gradient descent with an L2 penalty on W.

    Starts from zero weights, so the fit is deterministic; ``cfg.seed`` is
    recorded for provenance only.
    """
    Z = np.asarray(Z, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    train_mask = np.asarray(train_mask, dtype=bool)
    K = int(labels.max()) + 1 if num_classes is None else num_classes
    Xt, yt = Z[train_mask], labels[train_mask]
    missing = sorted(set(range(K)) - set(np.unique(yt).tolist()))
    if missing:
        raise ValueError(f"classes {missing} have no training examples")
    m = Xt.shape[0]
    Y = np.eye(K)[yt]
    W = np.zeros((Z.shape[1], K))
    b = np.zeros(K)
    for _ in range(cfg.steps):
        P = softmax(Xt @ W + b, axis=1)
        G = (P - Y) / m
        W -= cfg.lr * (Xt.T @ G + cfg.l2 * W)
        b -= cfg.lr * G.sum(axis=0)
    return ClassifierParams(W, b, cfg)


def probe_loss(params: ClassifierParams, Z, labels, mask) -> float:
    """Mean cross-entropy plus the L2 term (for diagnostics)."""
    Z = np.asarray(Z, dtype=np.float64)[mask]
    y = np.asarray(labels)[mask]
    lp = log_softmax(params.logits(Z), axis=1)
    return float(-lp[np.arange(y.size), y].mean() + 0.5 * params.config.l2 * np.sum(params.W**2))


def confusion_matrix(predictions, labels, num_classes: int | None = None) -> np.ndarray:
    """Counts with true classes on rows and predictions on columns."""
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    K = num_classes or int(max(predictions.max(initial=0), labels.max(initial=0))) + 1
    C = np.zeros((K, K), dtype=np.int64)
    np.add.at(C, (labels, predictions), 1)
    return C


@dataclass
class ClassificationMetrics:
    accuracy: float
    per_class: np.ndarray
    macro_f1: float
    delta_gap: float
    mcc: float
    empty_classes: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "per_class_accuracy": [float(v) for v in self.per_class],
            "macro_f1": self.macro_f1,
            "delta_gap": self.delta_gap,
            "mcc": self.mcc,
            "empty_classes": list(self.empty_classes),
        }


def matthews_corrcoef(C: np.ndarray) -> float:
    """Multiclass Matthews coefficient from a confusion matrix (covariance form)."""
    C = np.asarray(C, dtype=np.float64)
    s = C.sum()
    c = np.trace(C)
    t = C.sum(axis=1)
    p = C.sum(axis=0)
    num = c * s - t @ p
    den = np.sqrt((s**2 - p @ p) * (s**2 - t @ t))
    return float(num / den) if den > 0 else 0.0


def metrics_from_confusion(C: np.ndarray) -> ClassificationMetrics:
    C = np.asarray(C, dtype=np.float64)
    support = C.sum(axis=1)
    predicted = C.sum(axis=0)
    tp = np.diag(C)
    present = support > 0
    empty = [int(k) for k in np.flatnonzero(~present)]
    recall = np.divide(tp, support, out=np.zeros_like(tp), where=present)
    precision = np.divide(tp, predicted, out=np.zeros_like(tp), where=predicted > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros_like(tp), where=denom > 0)
    rec_present = recall[present]
    return ClassificationMetrics(
        accuracy=float(tp.sum() / C.sum()) if C.sum() else 0.0,
        per_class=recall,
        macro_f1=float(f1[present].mean()) if present.any() else 0.0,
        delta_gap=float(rec_present.max() - rec_present.min()) if present.any() else 0.0,
        mcc=matthews_corrcoef(C),
        empty_classes=empty,
    )


def classification_metrics(predictions, labels, test_mask=None, num_classes: int | None = None) -> ClassificationMetrics:
    """Accuracy, per-class recall, Macro-F1, max-min recall gap and MCC on the masked nodes.

    Classes with no test examples are left out of the gap and Macro-F1 and
    listed in ``empty_classes``.
    """
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if test_mask is not None:
        test_mask = np.asarray(test_mask, dtype=bool)
        predictions, labels = predictions[test_mask], labels[test_mask]
    if labels.size == 0:
        raise ValueError("empty test set")
    if num_classes is None:
        num_classes = int(max(predictions.max(), labels.max())) + 1
    return metrics_from_confusion(confusion_matrix(predictions, labels, num_classes))


def split_per_class(labels: np.ndarray, per_class: int = 20, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Random train mask with ``per_class`` nodes of each class; the rest form the test mask."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    train = np.zeros(labels.shape[0], dtype=bool)
    for c in np.unique(labels):
        nodes = np.flatnonzero(labels == c)
        if nodes.size <= per_class:
            raise ValueError(f"class {c} has {nodes.size} nodes, cannot hold out {per_class} for training")
        train[rng.choice(nodes, size=per_class, replace=False)] = True
    return train, ~train


@dataclass
class DensityReport:
    per_community: np.ndarray
    ave: float
    std: float

    def to_dict(self) -> dict:
        return {"per_community": [float(v) for v in self.per_community], "ave": self.ave, "std": self.std}


def density_report(Z: np.ndarray, labels: np.ndarray) -> DensityReport:
    """``V_C``: mean Euclidean distance of community members from their centroid.

    ``std`` is the population standard deviation across communities.
    """
    Z = np.asarray(Z, dtype=np.float64)
    labels = np.asarray(labels)
    vals = []
    for c in np.unique(labels):
        rows = Z[labels == c]
        vals.append(np.mean(np.linalg.norm(rows - rows.mean(axis=0), axis=1)))
    vals = np.array(vals)
    return DensityReport(vals, float(vals.mean()), float(vals.std()))
