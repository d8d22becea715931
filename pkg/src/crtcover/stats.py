"""Summary statistics, empirical distribution tools and small diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as _sps

__all__ = [
    "QUANTILE_LEVELS",
    "SummaryStats",
    "Moments",
    "EcdfTable",
    "summarize",
    "ecdf",
    "ks_distance",
    "survival_tail_slope",
    "TailFit",
    "tail_fit",
    "trapezoid_integral",
    "z_score",
    "InsufficientTailError",
]

QUANTILE_LEVELS = (0.01, 0.05, 0.25, 0.50, 0.75, 0.95, 0.99)


class InsufficientTailError(ValueError):
    """Too little tail mass to fit a slope."""


@dataclass(frozen=True)
class Moments:
    """Mergeable running moments (count, mean, sum of squared deviations)."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    @classmethod
    def of(cls, samples) -> "Moments":
        x = np.asarray(samples, dtype=float).ravel()
        if x.size == 0:
            return cls()
        mean = float(x.mean())
        return cls(int(x.size), mean, float(((x - mean) ** 2).sum()))

    def merge(self, other: "Moments") -> "Moments":
        if self.count == 0:
            return other
        if other.count == 0:
            return self
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * other.count / n
        m2 = self.m2 + other.m2 + delta * delta * self.count * other.count / n
        return Moments(n, mean, m2)

    @property
    def variance(self) -> float:
        return self.m2 / (self.count - 1) if self.count > 1 else 0.0

    @property
    def stderr(self) -> float:
        return math.sqrt(self.variance / self.count) if self.count else float("nan")


@dataclass(frozen=True)
class SummaryStats:
    count: int
    mean: float
    variance: float
    stderr: float
    quantiles: dict

    def as_dict(self) -> dict:
        return {"count": self.count, "mean": self.mean, "variance": self.variance,
                "stderr": self.stderr,
                "quantiles": {f"{k:g}": v for k, v in self.quantiles.items()}}


def summarize(samples) -> SummaryStats:
    """Moments (unbiased variance) and type-7 quantiles."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("cannot summarize an empty sample")
    mom = Moments.of(x)
    qs = np.quantile(x, QUANTILE_LEVELS, method="linear")
    qs = np.maximum.accumulate(qs)  # guard against rounding in interpolation
    return SummaryStats(mom.count, mom.mean, mom.variance, mom.stderr,
                        {lvl: float(q) for lvl, q in zip(QUANTILE_LEVELS, qs)})


@dataclass(frozen=True)
class EcdfTable:
    sorted_values: np.ndarray
    grid: np.ndarray
    cdf: np.ndarray


def ecdf(samples, grid=None) -> EcdfTable:
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    if x.size == 0:
        raise ValueError("empty sample")
    grid = x if grid is None else np.asarray(grid, dtype=float)
    cdf = np.searchsorted(x, grid, side="right") / x.size
    return EcdfTable(x, grid, cdf)


def ks_distance(a, b) -> float:
    """Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("KS distance needs two nonempty samples")
    return float(_sps.ks_2samp(a, b).statistic)


@dataclass(frozen=True)
class TailFit:
    """Least-squares line through log-survival of X / mean(X)."""

    slope: float
    intercept: float
    grid: np.ndarray
    log_survival: np.ndarray

    @property
    def residuals(self) -> np.ndarray:
        return self.log_survival - (self.intercept + self.slope * self.grid)


def tail_fit(samples, lam_grid, min_count: int = 50) -> TailFit:
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 1000:
        raise InsufficientTailError("tail fits need at least 1e3 samples")
    mean = x.mean()
    if not mean > 0 or np.ptp(x) == 0:
        raise InsufficientTailError("degenerate sample: no tail to fit")
    lam = np.asarray(lam_grid, dtype=float)
    srt = np.sort(x / mean)
    surv = 1.0 - np.searchsorted(srt, lam, side="left") / x.size
    ok = surv >= min_count / x.size
    if ok.sum() < 2:
        raise InsufficientTailError("fewer than two grid points with enough tail mass")
    slope, intercept = np.polyfit(lam[ok], np.log(surv[ok]), 1)
    return TailFit(float(slope), float(intercept), lam[ok], np.log(surv[ok]))


def survival_tail_slope(samples, lam_grid) -> float:
    """Slope of log P(X >= lam * mean X) against lam over well-populated grid points."""
    return tail_fit(samples, lam_grid).slope


def trapezoid_integral(grid, values) -> float:
    grid = np.asarray(grid, dtype=float)
    values = np.asarray(values, dtype=float)
    if grid.shape != values.shape:
        raise ValueError("grid and values must have the same length")
    if grid.size >= 2 and np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    return float(np.trapezoid(values, grid))


def z_score(estimate: float, target: float, stderr: float) -> float:
    if stderr == 0:
        return 0.0 if estimate == target else math.inf
    return (estimate - target) / stderr
