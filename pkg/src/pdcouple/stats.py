"""Goodness-of-fit and interval helpers shared by the experiment drivers."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy import stats as sps


class Estimate(NamedTuple):
    value: float
    error: float


@dataclass(frozen=True)
class StatReport:
    estimate: float
    stderr: float
    n: int
    method: str
    oracle: Optional[float] = None
    oracle_err: Optional[float] = None
    lo: Optional[float] = None
    hi: Optional[float] = None

    def __post_init__(self):
        if self.stderr < 0 or self.n < 1:
            raise ValueError("StatReport needs stderr >= 0 and n >= 1")

    def within(self, value: float, n_sigma: float = 3.0, extra: float = 0.0) -> bool:
        return abs(self.estimate - value) <= n_sigma * self.stderr + extra

    def csv_row(self, name: str) -> list:
        def fmt(v):
            return "" if v is None else repr(float(v))

        return [name, fmt(self.estimate), fmt(self.stderr), self.n, fmt(self.oracle), fmt(self.oracle_err)]


STAT_REPORT_HEADER = ["name", "estimate", "stderr", "n", "oracle", "oracle_err"]


def _nonempty(samples) -> np.ndarray:
    a = np.asarray(samples, dtype=np.float64).ravel()
    if a.size == 0:
        raise ValueError("empty sample")
    return a


def ks_stat(samples, cdf: Callable[[np.ndarray], np.ndarray]) -> float:
    """Two-sided Kolmogorov-Smirnov distance between the sample and `cdf`.

    Both sides are compared at every sample point and just below it, so a
    `cdf` with jumps (e.g. another empirical one) is handled as well.
    """
    x = np.sort(_nonempty(samples))
    n = x.size
    at = np.searchsorted(x, x, side="right") / n
    below = np.searchsorted(x, x, side="left") / n
    f = np.asarray(cdf(x), dtype=np.float64)
    f_below = np.asarray(cdf(np.nextafter(x, -np.inf)), dtype=np.float64)
    return float(max(np.max(np.abs(at - f)), np.max(np.abs(below - f_below))))


def ks_pvalue(d: float, n: int) -> float:
    return float(sps.kstwo.sf(d, n))


def empirical_cdf(samples) -> Callable[[np.ndarray], np.ndarray]:
    x = np.sort(_nonempty(samples))

    def cdf(t):
        return np.searchsorted(x, t, side="right") / x.size

    return cdf


def chi2_stat(counts, expected) -> float:
    c = _nonempty(counts)
    e = np.asarray(expected, dtype=np.float64).ravel()
    if c.shape != e.shape:
        raise ValueError("counts and expected differ in shape")
    keep = e > 0
    if np.any(c[~keep] > 0):
        return math.inf
    return float(np.sum((c[keep] - e[keep]) ** 2 / e[keep]))


def chi2_pvalue(stat: float, dof: int) -> float:
    return float(sps.chi2.sf(stat, dof))


def mean_ci(samples, method: str = "mean") -> StatReport:
    a = _nonempty(samples)
    sd = float(a.std(ddof=1)) if a.size > 1 else 0.0
    return StatReport(float(a.mean()), sd / math.sqrt(a.size), int(a.size), method)


def wilson(successes: int, n: int, z: float = 3.0) -> StatReport:
    """Wilson score interval; stderr is the binomial plug-in value."""
    if n < 1:
        raise ValueError("empty sample")
    p = successes / n
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return StatReport(p, math.sqrt(max(p * (1 - p), 0.0) / n), n, "wilson",
                      lo=max(0.0, centre - half), hi=min(1.0, centre + half))


class MomentAccumulator:
    """Mergeable count/sum/sum-of-squares accumulator."""

    __slots__ = ("n", "s1", "s2")

    def __init__(self, n: int = 0, s1: float = 0.0, s2: float = 0.0):
        self.n, self.s1, self.s2 = n, s1, s2

    def add(self, values) -> "MomentAccumulator":
        a = np.asarray(values, dtype=np.float64).ravel()
        self.n += a.size
        self.s1 += math.fsum(a)
        self.s2 += math.fsum(a * a)
        return self

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        return MomentAccumulator(self.n + other.n, self.s1 + other.s1, self.s2 + other.s2)

    def report(self, method: str = "mean") -> StatReport:
        if self.n < 1:
            raise ValueError("empty accumulator")
        mean = self.s1 / self.n
        var = max(self.s2 / self.n - mean * mean, 0.0) * self.n / max(self.n - 1, 1)
        return StatReport(mean, math.sqrt(var / self.n), self.n, method)


def no_monotone_increase(estimates, stderrs, n_sigma: float = 3.0) -> bool:
    """False only if every consecutive step rises by more than n_sigma."""
    est = list(estimates)
    se = list(stderrs)
    steps = [
        est[i + 1] - est[i] > n_sigma * math.hypot(se[i], se[i + 1]) for i in range(len(est) - 1)
    ]
    return not (steps and all(steps))
