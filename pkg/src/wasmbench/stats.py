"""Robust statistics over benchmark samples.

Percentiles use linear interpolation between order statistics
(``x[floor(p)] + (x[ceil(p)] - x[floor(p)]) * frac`` at position
``p = q * (n - 1)`` over the sorted sample); outliers are removed once
with the 1.5x IQR fence computed on the raw sample; the 95% confidence
interval for the median comes from a seeded percentile bootstrap
(B=1000), so summaries are deterministic for a given input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

BOOTSTRAP_RESAMPLES = 1000
BOOTSTRAP_SEED = 0x5EED


class EmptyInput(ValueError):
    """Statistics over an empty sample set are undefined."""


@dataclass(frozen=True)
class StatsSummary:
    n: int
    median: float
    p25: float
    p75: float
    iqr: float
    ci95_low: float
    ci95_high: float
    outliers_removed: int

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "median": self.median,
            "p25": self.p25,
            "p75": self.p75,
            "iqr": self.iqr,
            "ci95_low": self.ci95_low,
            "ci95_high": self.ci95_high,
            "outliers_removed": self.outliers_removed,
        }


def percentile(samples, q: float) -> float:
    """Linear-interpolation percentile, q in [0, 1]."""
    xs = sorted(float(x) for x in samples)
    if not xs:
        raise EmptyInput("no samples")
    pos = q * (len(xs) - 1)
    lo = math.floor(pos)
    hi = math.ceil(pos)
    return xs[lo] + (xs[hi] - xs[lo]) * (pos - lo)


def quartiles(samples) -> tuple[float, float, float]:
    """(p25, median, p75) by linear interpolation."""
    xs = sorted(float(x) for x in samples)
    if not xs:
        raise EmptyInput("no samples")
    return percentile(xs, 0.25), percentile(xs, 0.50), percentile(xs, 0.75)


def filter_outliers(samples: list[float]) -> tuple[list[float], list[float]]:
    """Split samples into (kept, removed) with the 1.5x IQR fence.

    The fence is computed once on the input; filtering is not iterated.
    """
    p25, _, p75 = quartiles(samples)
    iqr = p75 - p25
    lo, hi = p25 - 1.5 * iqr, p75 + 1.5 * iqr
    kept, removed = [], []
    for x in samples:
        (kept if lo <= x <= hi else removed).append(x)
    return kept, removed


def summarize(samples: list[float], bootstrap_seed: int = BOOTSTRAP_SEED) -> StatsSummary:
    """Outlier-filtered robust summary of one configuration cell."""
    if len(samples) == 0:
        raise EmptyInput("no samples")
    kept, removed = filter_outliers(samples)
    arr = np.asarray(kept, dtype=float)
    p25, median, p75 = quartiles(arr)
    ci_low, ci_high = bootstrap_ci_median(arr, seed=bootstrap_seed)
    return StatsSummary(
        n=int(arr.size),
        median=median,
        p25=p25,
        p75=p75,
        iqr=p75 - p25,
        ci95_low=ci_low,
        ci95_high=ci_high,
        outliers_removed=len(removed),
    )


def bootstrap_ci_median(
    samples: np.ndarray,
    resamples: int = BOOTSTRAP_RESAMPLES,
    seed: int = BOOTSTRAP_SEED,
) -> tuple[float, float]:
    """Percentile-bootstrap 95% CI of the median, deterministic per seed."""
    arr = np.asarray(samples, dtype=float)
    if arr.size == 0:
        raise EmptyInput("no samples")
    if arr.size == 1:
        return float(arr[0]), float(arr[0])
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, arr.size, size=(resamples, arr.size))
    medians = np.median(arr[idx], axis=1)
    lo, hi = np.percentile(medians, [2.5, 97.5], method="linear")
    return float(lo), float(hi)
