"""Kolmogorov-Smirnov validation of multinomial samples.

A discrete sample over events ``1..N`` is made continuous by replacing event
``i`` with ``(i - 1) + U(0, 1)``. If events occur with probabilities ``p``,
the converted values follow the piecewise-linear CDF

    F(x) = sum(p[1..ceil(x)]) + p[ceil(x)] * (x - ceil(x)),

so the ordinary one-sample KS test applies.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import EmptySample, IndexOutOfRange

ALPHAS = (0.1, 0.05, 0.01)


@dataclass
class ReferenceCdf:
    probabilities: np.ndarray
    prefix: np.ndarray = field(init=False, repr=False)   # prefix[i] = p_1 + ... + p_i

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float)
        if p.ndim != 1 or len(p) == 0:
            raise ValueError("need at least one event")
        if (p < 0).any() or not np.isfinite(p).all():
            raise ValueError("probabilities must be finite and nonnegative")
        total = p.sum()
        if not total > 0:
            raise ValueError("probabilities sum to 0")
        self.probabilities = p / total
        prefix = np.concatenate([[0.0], np.cumsum(self.probabilities)])
        prefix[-1] = 1.0
        self.prefix = prefix

    @classmethod
    def from_weights(cls, weights: Sequence[float]) -> "ReferenceCdf":
        return cls(np.asarray(weights, dtype=float))

    @property
    def support(self) -> int:
        return len(self.probabilities)

    def __call__(self, x) -> np.ndarray:
        x = np.clip(np.asarray(x, dtype=float), 0.0, self.support)
        c = np.ceil(x).astype(np.int64)
        c = np.maximum(c, 1)
        return self.prefix[c] + self.probabilities[c - 1] * (x - c)


@dataclass
class KsReport:
    d: float
    n: int
    critical: dict[float, float]
    passed: dict[float, bool]

    def as_dict(self) -> dict:
        return {"D": self.d, "n": self.n,
                "critical": {str(a): c for a, c in self.critical.items()},
                "pass": {str(a): p for a, p in self.passed.items()}}


def continuous_convert(events, rng: np.random.Generator, support: int | None = None) -> np.ndarray:
    """``(i - 1) + U(0, 1)`` per 1-based event index."""
    idx = np.asarray(events, dtype=np.int64)
    if len(idx) and (idx.min() < 1 or (support is not None and idx.max() > support)):
        raise IndexOutOfRange(f"event indices must lie in [1, {support or 'N'}]")
    return (idx - 1) + (1.0 - rng.random(len(idx)))   # offsets in (0, 1]


def ks_statistic(values, cdf: ReferenceCdf) -> float:
    """``sup |F_n(x) - F(x)|``, checked on both sides of every step."""
    x = np.sort(np.asarray(values, dtype=float))
    n = len(x)
    if n == 0:
        raise EmptySample("KS statistic of an empty sample")
    f = cdf(x)
    j = np.arange(1, n + 1)
    return float(max((j / n - f).max(), (f - (j - 1) / n).max()))


def ks_critical(alpha: float, n: int) -> float:
    """Asymptotic critical value ``sqrt(ln(2/alpha)/2) / sqrt(n)``."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must be in (0, 1)")
    if n < 1:
        raise ValueError("n must be >= 1")
    return math.sqrt(math.log(2.0 / alpha) / 2.0) / math.sqrt(n)


def ks_report(values, cdf: ReferenceCdf, alphas: Sequence[float] = ALPHAS) -> KsReport:
    d = ks_statistic(values, cdf)
    n = len(values)
    crit = {a: ks_critical(a, n) for a in alphas}
    return KsReport(d, n, crit, {a: d < c for a, c in crit.items()})


def ks_test_events(events, weights, rng: np.random.Generator, alphas: Sequence[float] = ALPHAS) -> KsReport:
    """KS report for 1-based event indices drawn from ``weights``."""
    cdf = ReferenceCdf.from_weights(weights)
    return ks_report(continuous_convert(events, rng, cdf.support), cdf, alphas)
