"""Stability and convergence metrics computed from per-episode returns."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

CV_MEAN_FLOOR = 1e-12


@dataclass(frozen=True)
class CvResult:
    value: float | None
    undefined: bool = False

    def __float__(self) -> float:
        return float("nan") if self.value is None else self.value


def coefficient_of_variation(values) -> CvResult:
    """Population standard deviation over mean, in percent.

    A mean within 1e-12 of zero leaves the ratio undefined; the result is
    then flagged instead of raising.
    """
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise ValueError("coefficient of variation needs at least one value")
    mu = float(np.mean(x))
    if abs(mu) <= CV_MEAN_FLOOR:
        return CvResult(None, True)
    return CvResult(float(np.std(x) / mu * 100.0))


def trailing_means(values, window: int) -> np.ndarray:
    """Mean of each full trailing window; entry i covers episodes i-window+1..i."""
    if window < 1:
        raise ValueError("window must be at least 1")
    x = np.asarray(values, dtype=float)
    if x.size < window:
        return np.zeros(0)
    c = np.concatenate([[0.0], np.cumsum(x)])
    return (c[window:] - c[:-window]) / window


def episodes_to_threshold(returns, threshold: float, window: int = 1) -> int | None:
    """0-based episode index where the trailing mean first reaches ``threshold``; None if never."""
    means = trailing_means(returns, window)
    hits = np.flatnonzero(means >= threshold)
    if hits.size == 0:
        return None
    return int(hits[0]) + window - 1


def stable_slice(values, fraction: float = 0.2) -> np.ndarray:
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        return x
    n = max(1, int(math.ceil(fraction * x.size)))
    return x[-n:]


def final_stable_mean(returns, fraction: float = 0.2) -> float:
    tail = stable_slice(returns, fraction)
    return float(np.mean(tail)) if tail.size else float("nan")


def default_threshold(returns, fraction: float = 0.885, stable_fraction: float = 0.2) -> float:
    """``fraction`` of the final stable mean (last ``stable_fraction`` of episodes)."""
    return fraction * final_stable_mean(returns, stable_fraction)


def summarize_returns(returns_by_seed: dict[int, list[float]], threshold: float | None, window: int,
                      stable_fraction: float = 0.2) -> dict:
    finals, cvs, hits = [], [], {}
    for seed, rets in returns_by_seed.items():
        tail = stable_slice(rets, stable_fraction)
        if tail.size:
            finals.append(float(np.mean(tail)))
            cvs.append(coefficient_of_variation(tail).value)
        hits[str(seed)] = None if threshold is None else episodes_to_threshold(rets, threshold, window)
    return {
        "final_mean": float(np.mean(finals)) if finals else None,
        "final_std": float(np.std(finals)) if finals else None,
        "cv_percent": [c for c in cvs],
        "threshold": threshold,
        "episodes_to_threshold": hits,
    }
