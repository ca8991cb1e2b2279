"""Beta and Dirichlet laws, the colouring of a Poisson-Dirichlet vector, and
re-exports of the generic statistics helpers."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .stats import (  # noqa: F401  (re-exported toolbox)
    Estimate,
    MomentAccumulator,
    StatReport,
    chi2_pvalue,
    chi2_stat,
    empirical_cdf,
    ks_pvalue,
    ks_stat,
    mean_ci,
    wilson,
)

_CF_EPS = 1e-16
_CF_TINY = 1e-300
_CF_MAX_ITER = 10_000


@dataclass(frozen=True)
class DirichletParams:
    alpha: tuple[float, ...]

    def __post_init__(self):
        a = tuple(float(v) for v in self.alpha)
        if len(a) < 2:
            raise ValueError("Dirichlet needs k >= 2")
        if any(not v > 0 for v in a):
            raise ValueError("alpha components must be positive")
        object.__setattr__(self, "alpha", a)

    @property
    def k(self) -> int:
        return len(self.alpha)

    @property
    def total(self) -> float:
        return math.fsum(self.alpha)

    def require_simplex(self) -> "DirichletParams":
        if abs(self.total - 1.0) > 1e-12:
            raise ValueError("alpha must sum to 1 here")
        return self


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for I_x(a, b), modified Lentz evaluation."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > _CF_TINY else _CF_TINY)
    h = d
    for m in range(1, _CF_MAX_ITER):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _CF_TINY else _CF_TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > _CF_TINY else _CF_TINY
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _CF_TINY else _CF_TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > _CF_TINY else _CF_TINY
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise ArithmeticError(f"continued fraction did not converge (a={a}, b={b}, x={x})")


def beta_cdf(a: float, b: float, u: float) -> float:
    """Regularised incomplete beta I_u(a, b)."""
    if not (a > 0 and b > 0):
        raise ValueError("a and b must be positive")
    if not 0.0 <= u <= 1.0:
        raise ValueError("u must lie in [0, 1]")
    if u == 0.0 or u == 1.0:
        return u
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(u) + b * math.log1p(-u))
    front = math.exp(log_front)
    # the fraction converges fast on the side of the mean
    if u < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, u) / a
    return 1.0 - front * _betacf(b, a, 1.0 - u) / b


def sample_dirichlet(stream: np.random.Generator, params: DirichletParams, size: int | None = None) -> np.ndarray:
    """Normalised independent Gamma(alpha_i, 1) draws."""
    shape = (params.k,) if size is None else (size, params.k)
    g = stream.gamma(np.asarray(params.alpha), 1.0, size=shape)
    return g / g.sum(axis=-1, keepdims=True)


def dirichlet_cdf(params: DirichletParams, u: Sequence[float], budget: int = 10**6,
                  stream: np.random.Generator | None = None, block: int = 1 << 18) -> StatReport:
    """P[Z_i <= u_i for i < k].  Exact for k = 2, Monte Carlo otherwise."""
    return dirichlet_cdf_grid(params, [u], budget, stream, block)[0]


def dirichlet_cdf_grid(params: DirichletParams, us: Sequence[Sequence[float]], budget: int = 10**6,
                       stream: np.random.Generator | None = None, block: int = 1 << 18) -> list[StatReport]:
    """`dirichlet_cdf` at many points; the Monte Carlo draws are shared."""
    us = [[float(v) for v in u] for u in us]
    for u in us:
        if len(u) != params.k - 1:
            raise ValueError("u needs k - 1 coordinates")
        if any(not 0.0 <= v <= 1.0 for v in u):
            raise ValueError("u must lie in [0, 1]^(k-1)")
    out: list = [None] * len(us)
    todo = []
    for g, u in enumerate(us):
        if all(v == 1.0 for v in u):
            out[g] = StatReport(1.0, 0.0, 1, "exact")
        elif params.k == 2:
            a = params.alpha
            out[g] = StatReport(beta_cdf(a[0], a[1], u[0]), 0.0, 1, "beta")
        else:
            todo.append(g)
    if not todo:
        return out
    if stream is None:
        raise ValueError("Monte Carlo evaluation needs a stream")
    U = np.array([us[g] for g in todo])
    hits = np.zeros(len(todo), dtype=np.int64)
    done = 0
    while done < budget:
        m = min(block, budget - done)
        z = sample_dirichlet(stream, params, m)[:, :-1]
        for i in range(len(todo)):
            hits[i] += int(np.count_nonzero(np.all(z <= U[i], axis=1)))
        done += m
    for i, g in enumerate(todo):
        p = hits[i] / budget
        out[g] = StatReport(p, math.sqrt(p * (1 - p) / budget), budget, "dirichlet-mc")
    return out


def dt_partition(V: Sequence[float], colors: Sequence[int], k: int,
                 remainder: float = 0.0, remainder_color: int | None = None) -> np.ndarray:
    """Per-colour sums of the sticks (colours are 1-based).

    The undrawn mass is one pseudo-stick with its own colour; leaving
    `remainder_color` unset drops it, which moves the result by at most
    `remainder`.
    """
    V = np.asarray(V, dtype=np.float64)
    c = np.asarray(colors, dtype=np.int64)
    if V.shape != c.shape:
        raise ValueError("one colour per drawn stick is required")
    if len(c) and (c.min() < 1 or c.max() > k):
        raise ValueError("colours must lie in 1..k")
    out = np.bincount(c - 1, weights=V, minlength=k).astype(np.float64)
    if remainder_color is not None:
        out[remainder_color - 1] += remainder
    return out


def dt_partition_batch(sticks: np.ndarray, colors: np.ndarray, k: int) -> np.ndarray:
    """Row-wise `dt_partition` for an (n, m) stick matrix with 1-based colours."""
    n = sticks.shape[0]
    flat = (np.arange(n)[:, None] * k + colors - 1).ravel()
    return np.bincount(flat, weights=sticks.ravel(), minlength=n * k).reshape(n, k)


def dt_partition_exact(stream: np.random.Generator, sticks: np.ndarray, remainder: np.ndarray,
                       alpha: Sequence[float]) -> np.ndarray:
    """Colour sums of a truncated GEM batch with the undrawn part split exactly.

    The sticks left after a stopping rule are `remainder` times a fresh GEM
    sequence, whose colour sums are Dir(alpha), so splitting the remainder
    as remainder * Dir(alpha) reproduces the law of the infinite vector.
    A single pseudo-stick would instead leave an atom at 0 of mass about
    max(1 - alpha_i)^(number of sticks), visible in KS tests when some
    alpha_i is small.
    """
    sticks = np.asarray(sticks, dtype=np.float64)
    colors = random_colors(stream, alpha, sticks.shape)
    out = dt_partition_batch(sticks, colors, len(alpha))
    split = sample_dirichlet(stream, DirichletParams(tuple(alpha)), sticks.shape[0])
    return out + np.asarray(remainder)[:, None] * split


def random_colors(stream: np.random.Generator, alpha: Sequence[float], size) -> np.ndarray:
    """I.i.d. colours in 1..k with probabilities alpha."""
    cum = np.cumsum(np.asarray(alpha, dtype=np.float64))
    cum[-1] = 1.0
    return np.searchsorted(cum, stream.random(size), side="right") + 1
