"""Comparing samples with exact laws: 1-D Wasserstein, KS, radial chi-square."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .cir import GammaLaw, gammainc_lower, gamma_quantile
from .errors import DomainError

__all__ = [
    "RadialHistogram",
    "Summary",
    "w1_empirical",
    "w1_vs_gamma",
    "ks_statistic",
    "ks_critical",
    "radial_histogram",
    "chi_square_gof",
    "chi2_sf",
    "chi2_critical",
    "ensemble_summary",
]


def _sample(a) -> np.ndarray:
    a = np.asarray(a, dtype=float).reshape(-1)
    if a.size == 0:
        raise DomainError("sample is empty")
    if not np.all(np.isfinite(a)):
        raise DomainError("sample has non-finite values")
    return a


def w1_empirical(a, b) -> float:
    """W1 between two equal-size empirical measures: mean gap of order statistics."""
    a, b = _sample(a), _sample(b)
    if a.size != b.size:
        raise DomainError(f"sample sizes differ: {a.size} vs {b.size}")
    return float(np.mean(np.abs(np.sort(a) - np.sort(b))))


def w1_vs_gamma(a, law: GammaLaw) -> float:
    """W1 proxy against a Gamma law, matching order statistics to mid-point quantiles."""
    a = np.sort(_sample(a))
    m = a.size
    q = gamma_quantile(law, (np.arange(1, m + 1) - 0.5) / m)
    return float(np.mean(np.abs(a - q)))


def ks_statistic(a, cdf: Callable[[np.ndarray], np.ndarray]) -> float:
    """One-sample Kolmogorov-Smirnov distance sup |F_m - F|."""
    a = np.sort(_sample(a))
    m = a.size
    f = np.asarray(cdf(a), dtype=float)
    i = np.arange(1, m + 1)
    return float(max(np.max(i / m - f), np.max(f - (i - 1) / m)))


def ks_critical(m: int, level: float = 0.01) -> float:
    """Asymptotic KS critical value sqrt(-log(level/2) / 2) / sqrt(m)."""
    return math.sqrt(-math.log(level / 2) / 2) / math.sqrt(m)


@dataclass
class RadialHistogram:
    edges: np.ndarray
    counts: np.ndarray
    total: int

    def __post_init__(self):
        if len(self.counts) != len(self.edges) - 1:
            raise DomainError("counts must have one entry fewer than edges")
        if np.sum(self.counts) > self.total:
            raise DomainError("counts exceed total")


def radial_histogram(points, edges) -> RadialHistogram:
    """Counts of |z| per bin ``[e_k, e_{k+1})`` (last bin closed); points outside
    the edges only count towards ``total``.  ``edges[-1]`` may be ``inf``."""
    edges = np.asarray(edges, dtype=float)
    if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise DomainError("edges must be strictly increasing with at least two entries")
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    r = np.hypot(pts[:, 0], pts[:, 1])
    idx = np.searchsorted(edges, r, side="right") - 1
    idx[r == edges[-1]] = edges.size - 2
    inside = (idx >= 0) & (idx < edges.size - 1)
    counts = np.bincount(idx[inside], minlength=edges.size - 1)
    return RadialHistogram(edges, counts, int(r.size))


def chi_square_gof(hist: RadialHistogram, expected) -> float:
    """Pearson statistic sum (O - m p)^2 / (m p) with m = hist.total."""
    p = np.asarray(expected, dtype=float)
    if p.shape != hist.counts.shape:
        raise DomainError("expected probabilities must match the bins")
    if p.sum() > 1 + 1e-9 or np.any(p < 0):
        raise DomainError("expected probabilities must be >= 0 and sum to <= 1")
    if np.any(p == 0):
        raise DomainError("zero expected probability in an unmerged bin")
    e = hist.total * p
    return float(np.sum((hist.counts - e) ** 2 / e))


def chi2_sf(x: float, df: int) -> float:
    return 1.0 - gammainc_lower(df / 2.0, x / 2.0)


def chi2_critical(df: int, level: float = 0.01) -> float:
    """Upper ``level`` quantile of chi-square(df)."""
    return gamma_quantile(GammaLaw(df / 2.0, 0.5), 1.0 - level)


@dataclass
class Summary:
    times: np.ndarray
    mean: np.ndarray
    se: np.ndarray


def ensemble_summary(records, field: str = "h_v") -> Summary:
    """Per-time ensemble mean and standard error of a recorded observable."""
    if not records:
        raise DomainError("empty ensemble")
    v = np.stack([getattr(r, field) for r in records])
    m = v.shape[0]
    se = v.std(axis=0, ddof=1) / math.sqrt(m) if m > 1 else np.zeros(v.shape[1])
    return Summary(records[0].times, v.mean(axis=0), se)
