"""Normalized residuals, analytic thresholds and detection metrics.

A residual is ``(y_hat - y) / sigma``. Under a well-trained model it is
standard normal, so the probability of ``|r| > R`` for a normal point is
``erfc(R / sqrt(2))`` and a threshold fixes the expected false-positive
rate without looking at any anomalous data.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError, DomainError
from .numerics import chi2_sf, erfc, normal_cdf

_SQRT2 = math.sqrt(2.0)


def residuals(ys, y_hat, sigma) -> np.ndarray:
    """Normalized residuals, shape (T, q)."""
    ys = np.asarray(ys, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if ys.ndim == 1:
        ys, y_hat, sigma = ys[:, None], y_hat.reshape(-1, 1), sigma.reshape(-1, 1)
    if not (ys.shape == y_hat.shape == sigma.shape):
        raise ContractError(f"misaligned residual inputs: {ys.shape}, {y_hat.shape}, {sigma.shape}")
    if np.any(sigma <= 0):
        raise ContractError("sigma must be positive")
    res = (y_hat - ys) / sigma
    if not np.all(np.isfinite(res)):
        raise ContractError("non-finite residuals")
    return res


def residuals_from_predictions(ys, preds) -> np.ndarray:
    """Same as :func:`residuals` for a list of model ``Prediction`` objects."""
    if len(ys) != len(preds):
        raise ContractError(f"{len(ys)} observations but {len(preds)} predictions")
    if not preds:
        return np.zeros((0, np.asarray(ys).reshape(0, -1).shape[1]))
    return residuals(ys, np.array([p.y_hat for p in preds]), np.array([p.sigma for p in preds]))


def p_value(R: float) -> float:
    """P(|r| > R) for a standard normal r."""
    if R < 0:
        raise DomainError(f"R must be >= 0, got {R}")
    return erfc(R / _SQRT2)


@dataclass(frozen=True)
class Threshold:
    r: float
    alpha: float

    @classmethod
    def from_r(cls, r: float) -> "Threshold":
        return cls(float(r), p_value(r))

    @classmethod
    def from_alpha(cls, alpha: float) -> "Threshold":
        return threshold_for_fp_rate(alpha)


def threshold_for_fp_rate(alpha: float) -> Threshold:
    if not 0 < alpha <= 1:
        raise DomainError(f"alpha must lie in (0, 1], got {alpha}")
    if alpha == 1.0:
        return Threshold(0.0, 1.0)
    lo, hi = 0.0, 40.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if p_value(mid) > alpha:
            lo = mid
        else:
            hi = mid
    r = 0.5 * (lo + hi)
    return Threshold(r, p_value(r))


def classify(res, thr: Threshold | float) -> np.ndarray:
    """Flag timestep t when any channel has ``|r| > R``."""
    R = thr.r if isinstance(thr, Threshold) else float(thr)
    res = np.asarray(res, dtype=np.float64)
    if res.ndim == 1:
        res = res[:, None]
    if res.shape[0] == 0:
        return np.zeros(0, dtype=bool)
    return np.max(np.abs(res), axis=1) > R


def aggregate_chi2(res, window: int) -> np.ndarray:
    """Chi-square p-value of each disjoint block of ``window`` timesteps.

    The sum of squared residuals over ``window * channels`` values is tested
    against a chi-square law with that many degrees of freedom. A trailing
    partial block is dropped.
    """
    res = np.asarray(res, dtype=np.float64)
    if res.ndim == 1:
        res = res[:, None]
    if window < 1:
        raise ContractError("window must be >= 1")
    if window > res.shape[0]:
        raise ContractError(f"window {window} longer than series of {res.shape[0]} steps")
    n = res.shape[0] // window
    k = window * res.shape[1]
    sums = np.sum(res[: n * window].reshape(n, -1) ** 2, axis=1)
    return np.array([chi2_sf(float(s), k) for s in sums])


@dataclass
class DetectionReport:
    predicted: np.ndarray
    tp: int | None = None
    fp: int | None = None
    tn: int | None = None
    fn: int | None = None
    precision: float | None = None
    recall: float | None = None
    f_beta: float | None = None
    beta: float = 1.0
    threshold_r: float | None = None
    threshold_alpha: float | None = None
    warn: np.ndarray | None = None
    warn_threshold_r: float | None = None

    def to_dict(self) -> dict:
        d = {
            "precision": self.precision,
            "recall": self.recall,
            "f_beta": self.f_beta,
            "beta": self.beta,
            "tp": self.tp,
            "fp": self.fp,
            "tn": self.tn,
            "fn": self.fn,
            "threshold_r": self.threshold_r,
            "threshold_alpha": self.threshold_alpha,
            "n_points": int(len(self.predicted)),
            "n_flagged": int(np.sum(self.predicted)),
            "predicted": [int(v) for v in self.predicted],
        }
        if self.warn is not None:
            d["warn_threshold_r"] = self.warn_threshold_r
            d["warn"] = [int(v) for v in self.warn]
        return d

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "DetectionReport":
        d = json.loads(Path(path).read_text(encoding="utf-8"))
        warn = d.get("warn")
        return cls(
            np.array(d["predicted"], dtype=bool), d["tp"], d["fp"], d["tn"], d["fn"],
            d["precision"], d["recall"], d["f_beta"], d["beta"], d["threshold_r"], d["threshold_alpha"],
            None if warn is None else np.array(warn, dtype=bool), d.get("warn_threshold_r"),
        )


def f_beta_score(precision: float, recall: float, beta: float) -> float | None:
    b2 = beta * beta
    denom = b2 * precision + recall
    if denom == 0:
        return None
    return (1 + b2) * precision * recall / denom


def evaluate(predicted, truth, beta: float = 1.0) -> DetectionReport:
    predicted = np.asarray(predicted, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    if predicted.shape != truth.shape:
        raise ContractError(f"{len(predicted)} predictions but {len(truth)} labels")
    if beta <= 0:
        raise DomainError("beta must be positive")
    tp = int(np.sum(predicted & truth))
    fp = int(np.sum(predicted & ~truth))
    fn = int(np.sum(~predicted & truth))
    tn = int(np.sum(~predicted & ~truth))
    precision = tp / (tp + fp) if tp + fp > 0 else None
    recall = tp / (tp + fn) if tp + fn > 0 else None
    f = None if precision is None or recall is None else f_beta_score(precision, recall, beta)
    return DetectionReport(predicted, tp, fp, tn, fn, precision, recall, f, beta)


def detect(res, thr: Threshold, truth=None, beta: float = 1.0, warn: Threshold | None = None) -> DetectionReport:
    """Classify residuals and, if labels are available, score them.

    With ``warn`` given the report also carries the flags of the lower
    (warning) level; metrics always refer to ``thr``.
    """
    flags = classify(res, thr)
    if truth is None:
        report = DetectionReport(flags, beta=beta)
    else:
        report = evaluate(flags, truth, beta)
    report.threshold_r, report.threshold_alpha = thr.r, thr.alpha
    if warn is not None:
        report.warn = classify(res, warn)
        report.warn_threshold_r = warn.r
    return report


@dataclass
class Calibration:
    within: dict[int, float]
    bin_edges: np.ndarray
    counts: np.ndarray
    normal_density: np.ndarray = field(repr=False)

    def expected_counts(self) -> np.ndarray:
        return self.normal_density * np.diff(self.bin_edges) * self.counts.sum()


def histogram_edges(limit: float = 5.0, bins: int = 40) -> np.ndarray:
    """Bin edges symmetric about zero."""
    half = np.linspace(0.0, limit, bins // 2 + 1)
    return np.concatenate([-half[:0:-1], half])


def residual_calibration(res, limit: float = 5.0, bins: int = 40) -> Calibration:
    """Coverage within 1, 2, 3 sigma and a histogram against the normal law.

    Residuals of all channels are pooled. ``normal_density`` is the mean
    standard-normal density over each bin, so ``count ~ N * width * density``.
    """
    r = np.abs(np.asarray(res, dtype=np.float64)).ravel()
    if r.size == 0:
        raise ContractError("no residuals to calibrate")
    within = {k: float(np.mean(r <= k)) for k in (1, 2, 3)}
    edges = histogram_edges(limit, bins)
    counts, _ = np.histogram(np.asarray(res, dtype=np.float64).ravel(), bins=edges)
    density = np.array([(normal_cdf(b) - normal_cdf(a)) / (b - a) for a, b in zip(edges[:-1], edges[1:])])
    return Calibration(within, edges, counts, density)
