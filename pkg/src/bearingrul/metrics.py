"""Accuracy and curve-quality metrics for RUL / health-indicator series."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

DEFAULT_MV_WINDOW = 21


class DegenerateError(ValueError):
    pass


@dataclass(frozen=True)
class MetricReport:
    rmse: float
    mae: float
    score: float
    monotonicity: float
    trendiness: float
    mad: float
    mv: float
    mv_window: int = DEFAULT_MV_WINDOW

    def as_dict(self):
        return asdict(self)


def _pair(pred, actual):
    p = np.asarray(pred, dtype=np.float64).ravel()
    a = np.asarray(actual, dtype=np.float64).ravel()
    if p.size != a.size:
        raise ValueError(f"length mismatch: {p.size} predictions vs {a.size} targets")
    if p.size == 0:
        raise ValueError("empty series")
    return p, a


def _series(x, min_len=2):
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size < min_len:
        raise ValueError(f"series needs at least {min_len} points")
    return x


def rmse(pred, actual) -> float:
    p, a = _pair(pred, actual)
    return float(np.sqrt(np.mean((p - a) ** 2)))


def mae(pred, actual) -> float:
    p, a = _pair(pred, actual)
    return float(np.mean(np.abs(p - a)))


def score(pred, actual) -> float:
    """Asymmetric exponential error: ``E = actual - pred``; ``exp(-E/13)`` if ``E <= 0`` else ``exp(E/10)``."""
    p, a = _pair(pred, actual)
    e = a - p
    return float(np.mean(np.where(e <= 0, np.exp(-e / 13.0), np.exp(e / 10.0))))


def monotonicity(series) -> float:
    d = np.diff(_series(series))
    return float(abs(np.count_nonzero(d > 0) - np.count_nonzero(d < 0)) / d.size)


def trendiness(series) -> float:
    """Signed Pearson correlation between the values and their indices."""
    x = _series(series)
    t = np.arange(x.size, dtype=np.float64)
    xc = x - x.mean()
    tc = t - t.mean()
    denom = np.sqrt((xc**2).sum() * (tc**2).sum())
    if denom == 0:
        raise DegenerateError("constant series has no trend")
    return float((xc * tc).sum() / denom)


def mad(series) -> float:
    """Mean absolute step between adjacent points."""
    return float(np.mean(np.abs(np.diff(_series(series)))))


def mv(series, window: int = DEFAULT_MV_WINDOW) -> float:
    """Mean of population variances over all stride-1 windows of length ``window``."""
    x = _series(series)
    if window < 2:
        raise ValueError("window must be >= 2")
    if window > x.size:
        raise ValueError(f"window {window} exceeds series length {x.size}")
    wins = np.lib.stride_tricks.sliding_window_view(x, window)
    return float(wins.var(axis=1).mean())


def evaluate(pred, label, mv_window: int = DEFAULT_MV_WINDOW) -> MetricReport:
    p = getattr(pred, "values", pred)
    a = getattr(label, "values", label)
    p, a = _pair(p, a)
    return MetricReport(
        rmse=rmse(p, a),
        mae=mae(p, a),
        score=score(p, a),
        monotonicity=monotonicity(p),
        trendiness=trendiness(p),
        mad=mad(p),
        mv=mv(p, mv_window),
        mv_window=mv_window,
    )


def mean_report(reports) -> MetricReport:
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to average")
    fields = ("rmse", "mae", "score", "monotonicity", "trendiness", "mad", "mv")
    vals = {f: float(np.mean([getattr(r, f) for r in reports])) for f in fields}
    return MetricReport(**vals, mv_window=reports[0].mv_window)
