"""Error-rate imbalance of the one-dimensional Gaussian QDA rule under unequal class variances."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

MC_SHARDS = 16


@dataclass(frozen=True)
class QdaParams:
    sigma1: float
    sigma2: float
    mu1: float = 0.0
    mu2: float = 0.0

    def __post_init__(self):
        if self.sigma1 <= 0 or self.sigma2 <= 0:
            raise ValueError("standard deviations must be positive")


@dataclass
class FairnessReport:
    p1: float
    p2: float
    kappa: float
    se1: float | None = None
    se2: float | None = None

    def to_dict(self) -> dict:
        out = {"p1": self.p1, "p2": self.p2, "kappa": self.kappa}
        if self.se1 is not None:
            out.update(se1=self.se1, se2=self.se2)
        return out


def kappa(p1: float, p2: float) -> float:
    lo, hi = min(p1, p2), max(p1, p2)
    if lo == 0.0:
        return float("inf") if hi > 0 else 1.0
    return hi / lo


def _square_tail(threshold: float, mean: float, sd: float, upper: bool) -> float:
    """``P(Y^2 > t)`` (``upper``) or ``P(Y^2 < t)`` for ``Y ~ N(mean, sd^2)``."""
    if threshold <= 0.0:
        return 1.0 if upper else 0.0
    root = np.sqrt(threshold)
    if upper:
        return float(norm.cdf((-root - mean) / sd) + norm.sf((root - mean) / sd))
    return float(norm.cdf((root - mean) / sd) - norm.cdf((-root - mean) / sd))


def _class_error(s1: float, s2: float, m1: float, m2: float) -> float:
    # Class 1 is chosen iff R - Δ(x - a)^2 > 0; with Y = sqrt|Δ|(x - a) the error
    # is P(Y^2 > R) when Δ > 0 and P(Y^2 < -R) when Δ < 0.
    v1, v2 = s1 * s1, s2 * s2
    delta = v2 - v1
    a = (v2 * m1 - v1 * m2) / delta
    R = 2.0 * v1 * v2 * np.log(s2 / s1) + delta * a * a - (v2 * m1 * m1 - v1 * m2 * m2)
    scale = np.sqrt(abs(delta))
    mean = scale * (m1 - a)
    sd = scale * s1
    if delta > 0:
        return _square_tail(R, mean, sd, upper=True)
    return _square_tail(-R, mean, sd, upper=False)


def qda_error_closed_form(sigma1: float, sigma2: float, mu1: float = 0.0, mu2: float = 0.0) -> FairnessReport:
    """Exact per-class error of the QDA rule via the Gaussian quadratic tail.

    With ``mu1 = mu2 = 0`` the class-1 error is ``P(Y^2 > 2 s1^2 s2^2 log(s2/s1))``
    for ``Y ~ N(0, (s2^2 - s1^2) s1^2)`` when ``s1 < s2`` (the lower tail when
    ``s1 > s2``). Equal variances with equal means are non-identifiable and
    raise; equal variances with distinct means reduce to the linear rule.
    """
    p = QdaParams(sigma1, sigma2, mu1, mu2)
    if p.sigma1 == p.sigma2:
        if p.mu1 == p.mu2:
            raise ValueError("equal variances and equal means: QDA is non-identifiable; use qda_error_monte_carlo")
        e = float(norm.cdf(-abs(p.mu1 - p.mu2) / (2.0 * p.sigma1)))
        return FairnessReport(e, e, 1.0)
    p1 = _class_error(p.sigma1, p.sigma2, p.mu1, p.mu2)
    p2 = _class_error(p.sigma2, p.sigma1, p.mu2, p.mu1)
    return FairnessReport(p1, p2, kappa(p1, p2))


def qda_predict_class1(x: np.ndarray, p: QdaParams, rng: np.random.Generator | None = None) -> np.ndarray:
    """True where the class-1 discriminant wins; exact ties go to a fair coin when ``rng`` is given."""
    g1 = -np.log(p.sigma1) - (x - p.mu1) ** 2 / (2.0 * p.sigma1**2)
    g2 = -np.log(p.sigma2) - (x - p.mu2) ** 2 / (2.0 * p.sigma2**2)
    win = g1 > g2
    if rng is not None:
        tie = g1 == g2
        win |= tie & (rng.random(x.shape[0]) < 0.5)
    return win


def _thread_count() -> int:
    env = os.environ.get("RGCCL_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _shard(seed_seq: np.random.SeedSequence, count: int, p: QdaParams) -> tuple[int, int]:
    rng = np.random.default_rng(seed_seq)
    x1 = rng.normal(p.mu1, p.sigma1, count)
    x2 = rng.normal(p.mu2, p.sigma2, count)
    wrong1 = int(np.count_nonzero(~qda_predict_class1(x1, p, rng)))
    wrong2 = int(np.count_nonzero(qda_predict_class1(x2, p, rng)))
    return wrong1, wrong2


def qda_error_monte_carlo(params: QdaParams, samples: int = 1_000_000, seed: int = 0) -> FairnessReport:
    """Empirical per-class QDA error from ``samples`` draws per class.

    Work is split into a fixed number of shards with independent streams, so
    the result does not depend on how many threads run them.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    shards = min(MC_SHARDS, samples)
    counts = [samples // shards + (1 if i < samples % shards else 0) for i in range(shards)]
    streams = np.random.SeedSequence(seed).spawn(shards)
    with ThreadPoolExecutor(max_workers=min(_thread_count(), shards)) as pool:
        results = list(pool.map(lambda a: _shard(a[0], a[1], params), zip(streams, counts)))
    wrong1 = sum(r[0] for r in results)
    wrong2 = sum(r[1] for r in results)
    p1, p2 = wrong1 / samples, wrong2 / samples
    return FairnessReport(
        p1, p2, kappa(p1, p2),
        se1=float(np.sqrt(p1 * (1 - p1) / samples)),
        se2=float(np.sqrt(p2 * (1 - p2) / samples)),
    )


def sigmas_for_ratio(ratio: float, sum_sq: float) -> tuple[float, float]:
    """``(sigma1, sigma2)`` with ``sigma1/sigma2 = ratio`` and ``sigma1^2 + sigma2^2 = sum_sq``."""
    if ratio <= 0 or sum_sq <= 0:
        raise ValueError("ratio and sum_sq must be positive")
    s2 = np.sqrt(sum_sq / (1.0 + ratio * ratio))
    return float(ratio * s2), float(s2)


def kappa_sweep(ratios, sum_sq: float = 2.0, mu1: float = 0.0, mu2: float = 0.0) -> list[dict]:
    """Closed-form ``kappa`` per variance ratio ``sigma1/sigma2`` at fixed ``sigma1^2 + sigma2^2``."""
    rows = []
    for r in ratios:
        s1, s2 = sigmas_for_ratio(float(r), sum_sq)
        rep = qda_error_closed_form(s1, s2, mu1, mu2)
        rows.append({"ratio": float(r), "sigma1": s1, "sigma2": s2, "p1": rep.p1, "p2": rep.p2, "kappa": rep.kappa})
    return rows
