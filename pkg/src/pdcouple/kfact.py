"""Random k-factorizations from multiplicative kernels, exact joint laws by
enumeration, the colour coupling with a Poisson-Dirichlet vector, and the
divisor statistic rho(n)."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, NamedTuple, Optional, Sequence

import numba
import numpy as np

from . import primes as pr
from .coupling import CouplingSample
from .dirichlet_stats import random_colors

FAMILIES = ("uniform", "recursive", "multinomial", "custom")
ENUM_WARN_UNITS = 10**8

Kernel = Callable[[int, int], dict]


class SpecError(ValueError):
    pass


def compositions(e: int, k: int):
    """All k-tuples of non-negative integers summing to e."""
    if k == 1:
        yield (e,)
        return
    for first in range(e + 1):
        for rest in compositions(e - first, k - 1):
            yield (first,) + rest


@dataclass(frozen=True)
class FactorSpec:
    k: int
    family: str
    alpha: tuple = ()
    kernel: Optional[Kernel] = field(default=None, compare=False)

    def __post_init__(self):
        if self.k < 2:
            raise SpecError("k must be >= 2")
        if self.family not in FAMILIES:
            raise SpecError(f"family must be one of {FAMILIES}")
        if self.family == "uniform":
            a = tuple(Fraction(1, self.k) for _ in range(self.k))
        elif self.family == "recursive":
            a = tuple(Fraction(1, 2**j) for j in range(1, self.k)) + (Fraction(1, 2 ** (self.k - 1)),)
        else:
            a = tuple(self.alpha)
            if self.family == "custom" and self.kernel is None:
                raise SpecError("custom family needs a kernel")
        if len(a) != self.k:
            raise SpecError("alpha must have k components")
        if any(not v > 0 for v in a) or abs(float(sum(a)) - 1.0) > 1e-12:
            raise SpecError("alpha must lie in the open simplex")
        object.__setattr__(self, "alpha", a)

    def local_law(self, p: int, e: int) -> dict:
        """Mass function on k-compositions of e for the prime power p^e."""
        return _local_law(self, p, e)


@lru_cache(maxsize=4096)
def _local_law(spec: FactorSpec, p: int, e: int) -> dict:
    k = spec.k
    comps = list(compositions(e, k))
    if spec.family == "uniform":
        m = Fraction(1, math.comb(e + k - 1, k - 1))
        return {c: m for c in comps}
    if spec.family == "recursive":
        out = {}
        for c in comps:
            m = Fraction(1)
            tail = e
            for j in range(k - 1):
                m /= tail + 1
                tail -= c[j]
            out[c] = m
        return out
    if spec.family == "multinomial":
        out = {}
        for c in comps:
            coef = math.factorial(e)
            for ci in c:
                coef //= math.factorial(ci)
            m = coef
            for a, ci in zip(spec.alpha, c):
                m = m * a**ci
            out[c] = m
        return out
    law = dict(spec.kernel(p, e))
    if any(len(c) != k or sum(c) != e or min(c) < 0 for c in law):
        raise SpecError(f"custom kernel returned a non-composition at p={p}, e={e}")
    if any(v < 0 for v in law.values()) or abs(float(sum(law.values())) - 1.0) > 1e-12:
        raise SpecError(f"custom kernel masses at p={p}, e={e} do not sum to 1")
    return law


class KFactSample(NamedTuple):
    n: int
    d: tuple
    delta: np.ndarray
    delta_star: np.ndarray


def make_kfact_sample(n: int, d: Sequence[int], x: float) -> KFactSample:
    k = len(d)
    logs = np.log(np.asarray(d, dtype=np.float64))
    if n == 1:
        delta = np.zeros(k)
        delta[0] = 1.0
        delta_star = np.zeros(k)
    else:
        delta = logs / math.log(n)
        delta_star = logs / math.log(x)
    return KFactSample(n, tuple(int(v) for v in d), delta, delta_star)


def tau_k(prof: pr.ArithProfile, k: int) -> int:
    if k < 1:
        raise ValueError("k must be >= 1")
    return math.prod(math.comb(e + k - 1, k - 1) for e in prof.factorization().values())


def draw_composition(stream: np.random.Generator, spec: FactorSpec, p: int, e: int) -> tuple:
    """One k-composition of e from the kernel at p^e."""
    k = spec.k
    if spec.family == "multinomial":
        return tuple(int(v) for v in stream.multinomial(e, np.asarray(spec.alpha, dtype=np.float64)))
    if spec.family == "recursive":
        out = []
        left = e
        for _ in range(k - 1):
            c = int(stream.integers(0, left + 1))
            out.append(c)
            left -= c
        return tuple(out) + (left,)
    if spec.family == "uniform":
        # stars and bars: a uniform (k-1)-subset of e + k - 1 slots
        bars = np.sort(stream.choice(e + k - 1, size=k - 1, replace=False))
        edges = np.concatenate(([-1], bars, [e + k - 1]))
        return tuple(int(v) for v in np.diff(edges) - 1)
    law = spec.local_law(p, e)
    comps = list(law)
    probs = np.array([float(law[c]) for c in comps])
    return comps[int(stream.choice(len(comps), p=probs / probs.sum()))]


def sample_exponents(stream, spec: FactorSpec, prof: pr.ArithProfile) -> dict:
    return {p: draw_composition(stream, spec, p, e) for p, e in sorted(prof.factorization().items())}


def assemble(exps: dict, k: int) -> tuple:
    d = [1] * k
    for p, c in exps.items():
        for j in range(k):
            d[j] *= p ** c[j]
    return tuple(d)


def sample_kfact(stream, spec: FactorSpec, prof: pr.ArithProfile, x: float) -> KFactSample:
    """Random k-factorization of prof.n, one composition per prime power."""
    return make_kfact_sample(prof.n, assemble(sample_exponents(stream, spec, prof), spec.k), x)


def factorization_law(spec: FactorSpec, prof: pr.ArithProfile) -> dict:
    """Exact mass f(d) for every k-factorization d of n."""
    out = {tuple([1] * spec.k): Fraction(1) if spec.family != "multinomial" else 1}
    for p, e in sorted(prof.factorization().items()):
        law = spec.local_law(p, e)
        nxt = {}
        for d, m in out.items():
            for c, mc in law.items():
                nd = tuple(di * p**ci for di, ci in zip(d, c))
                nxt[nd] = m * mc
        out = nxt
    return out


def _iroot_pow(n: int, u: Fraction) -> int:
    """Largest integer t with t^den <= n^num, i.e. floor(n^u)."""
    a, b = u.numerator, u.denominator
    target = n**a
    t = int(math.floor(n ** (a / b)))
    while t > 0 and t**b > target:
        t -= 1
    while (t + 1) ** b <= target:
        t += 1
    return t


def exact_joint_law(spec: FactorSpec, x: float, u: Sequence, table: pr.PrimeTable | None = None):
    """(1/floor(x)) sum_{n <= x} sum_{d: d_i <= n^{u_i}, i < k} f(d), exactly."""
    return exact_joint_law_grid(spec, x, [tuple(u)], table)[0]


def exact_joint_law_grid(spec: FactorSpec, x: float, us: Sequence[Sequence], table: pr.PrimeTable | None = None,
                         budget: int = ENUM_WARN_UNITS) -> list:
    """`exact_joint_law` at several u vectors with a single enumeration.

    Thresholds compare d^b <= n^a for u = a/b (u parsed from its decimal
    string), so no rounding enters.
    """
    X = int(math.floor(x))
    if X < 1:
        raise ValueError("x must be >= 1")
    us = [tuple(Fraction(str(v)) if not isinstance(v, Fraction) else v for v in u) for u in us]
    for u in us:
        if len(u) != spec.k - 1 or any(not 0 <= v <= 1 for v in u):
            raise ValueError("each u needs k - 1 coordinates in [0, 1]")
    work = X * (math.log(max(X, 2)) + 1) ** (spec.k - 1)
    if work > budget:
        raise pr.CapacityError(f"enumeration needs about {work:.3g} units (> {budget})")
    table = table or pr.build_prime_table(max(X, 16))
    totals = [Fraction(0) if spec.family != "multinomial" or _is_exact(spec) else 0.0 for _ in us]
    for n in range(1, X + 1):
        law = factorization_law(spec, pr.arith_profile(table, n))
        for g, u in enumerate(us):
            caps = [_iroot_pow(n, v) for v in u]
            s = sum(m for d, m in law.items() if all(d[i] <= caps[i] for i in range(spec.k - 1)))
            totals[g] += s
    return [t / X for t in totals]


def _is_exact(spec: FactorSpec) -> bool:
    return all(isinstance(a, (int, Fraction)) for a in spec.alpha)


# --------------------------------------------------------------------------
# coupling with the Poisson-Dirichlet vector


class CoupledKFact(NamedTuple):
    sample: KFactSample
    Z: np.ndarray
    event_ok: bool
    rho: np.ndarray
    colors: np.ndarray


def coupled_kfact(stream, cs: CouplingSample, spec: FactorSpec) -> CoupledKFact:
    """Colour the coupled sticks through the factorization of N.

    A prime P_i dividing N exactly once takes the colour of the coordinate
    receiving it; every other index, the remaining sticks and the pooled
    undrawn mass take independent alpha-colours.
    """
    if cs.N is None or cs.prof_N is None or cs.l1 is None:
        raise ValueError("coupled_kfact needs a complete coupled sample")
    k = spec.k
    x = cs.x
    log_x = math.log(x)
    prof = cs.prof_N
    exps = sample_exponents(stream, spec, prof)
    ks = make_kfact_sample(prof.n, assemble(exps, k), x)
    fac = prof.factorization()
    n_p = len(prof.prime_seq)
    n_v = len(cs.V)
    m = max(n_p, n_v)
    colors = random_colors(stream, [float(a) for a in spec.alpha], m + 1)
    for i, p in enumerate(prof.prime_seq):
        if fac[p] == 1:
            colors[i] = exps[p].index(1) + 1
    rho = np.zeros(k)
    for i, p in enumerate(prof.prime_seq):
        rho[colors[i] - 1] += math.log(p) / log_x
    Z = np.bincount(colors[:n_v] - 1, weights=cs.V, minlength=k).astype(np.float64)
    Z[colors[m] - 1] += cs.gem.remainder
    thr = (2 * math.log(x / cs.N) + 3 * math.log(prof.s) + 2 * cs.theta_x) / log_x
    ok = float(np.max(np.abs(ks.delta - Z))) <= thr + 1e-12
    return CoupledKFact(ks, Z, ok, rho, colors)


def transition_checks(ck: CoupledKFact, x: float, s_n: int) -> tuple[bool, bool]:
    """The two deterministic bounds |delta - delta*| <= log(x/N)/log x and
    |delta* - rho| <= log s(N)/log x (sup norms)."""
    log_x = math.log(x)
    n = ck.sample.n
    a = float(np.max(np.abs(ck.sample.delta - ck.sample.delta_star))) <= math.log(x / n) / log_x + 1e-12
    b = float(np.max(np.abs(ck.sample.delta_star - ck.rho))) <= math.log(s_n) / log_x + 1e-12
    return a, b


# --------------------------------------------------------------------------
# rho(n) = least divisor >= sqrt(n)


def divisors(prof: pr.ArithProfile) -> list[int]:
    out = [1]
    for p, e in prof.factorization().items():
        out = [d * p**i for d in out for i in range(e + 1)]
    return sorted(out)


def rho_half(prof: pr.ArithProfile) -> int:
    n = prof.n
    return min(d for d in divisors(prof) if d * d >= n)


def log_rho_sieve(x: int, chunk: int = 1 << 22) -> np.ndarray:
    """log rho(n) for n = 0..x (entry 0 unused): rho(n) = n / (largest divisor <= sqrt n)."""
    best = np.ones(x + 1, dtype=np.int64)
    for d in range(2, math.isqrt(x) + 1):
        best[d * d:: d] = d
    n = np.arange(x + 1, dtype=np.float64)
    n[0] = 1.0
    return np.log(n) - np.log(best.astype(np.float64))


PSI_POOL = 1e-6


@numba.njit(cache=True)
def _min_subset_at_least(v, t):
    """Smallest subset sum of v (sorted descending) that is >= t; inf if none."""
    m = v.shape[0]
    suffix = np.zeros(m + 1)
    for i in range(m - 1, -1, -1):
        suffix[i] = suffix[i + 1] + v[i]
    best = np.inf
    if suffix[0] < t:
        return best
    # explicit stack of (index, running sum)
    stack_i = np.empty(2 * m + 2, dtype=np.int64)
    stack_s = np.empty(2 * m + 2)
    top = 0
    stack_i[0] = 0
    stack_s[0] = 0.0
    top = 1
    while top > 0:
        top -= 1
        i = stack_i[top]
        s = stack_s[top]
        if s >= t:
            if s < best:
                best = s
            continue
        if i == m or s + suffix[i] < t or s >= best:
            continue
        if s + v[i] < best:
            stack_i[top] = i + 1
            stack_s[top] = s + v[i]
            top += 1
        stack_i[top] = i + 1
        stack_s[top] = s
        top += 1
    return best


class PsiInterval(NamedTuple):
    lo: float
    hi: float

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)


def rho_psi_interval(V: Sequence[float], remainder: float = 0.0, pool: float = PSI_POOL) -> PsiInterval:
    """Enclosure of psi(V) = inf of subset sums of V lying in [1/2, 1].

    Sticks below `pool` are merged with the undrawn remainder into a mass s
    that can realise any value in [0, s] up to gaps of size `pool`.
    """
    v = np.sort(np.asarray(V, dtype=np.float64))[::-1]
    if len(v) and v[0] >= 0.5:
        return PsiInterval(float(v[0]), float(v[0]))
    big = v[v >= pool]
    s = float(v[v < pool].sum()) + remainder
    at_half = _min_subset_at_least(big, 0.5)
    if s == 0.0:
        return PsiInterval(float(at_half), float(at_half))
    low = _min_subset_at_least(big, 0.5 - s)
    lo = max(0.5, float(low))
    hi = float(at_half)
    if low < 0.5:
        hi = min(hi, float(low) + s)
    return PsiInterval(lo, min(hi, 1.0))


def rho_psi(V: Sequence[float], remainder: float = 0.0) -> float:
    """Midpoint of `rho_psi_interval` (width at most the pooled mass)."""
    return rho_psi_interval(V, remainder).mid


@numba.njit(cache=True)
def _psi_rows(sticks, lengths, pooled, out_lo, out_hi):
    for r in range(sticks.shape[0]):
        v = sticks[r, : lengths[r]]
        if v.shape[0] > 0 and v[0] >= 0.5:
            out_lo[r] = v[0]
            out_hi[r] = v[0]
            continue
        s = pooled[r]
        at_half = _min_subset_at_least(v, 0.5)
        low = _min_subset_at_least(v, 0.5 - s)
        lo = max(0.5, low)
        hi = at_half
        if low < 0.5:
            hi = min(hi, low + s)
        out_lo[r] = lo
        out_hi[r] = min(hi, 1.0)


def rho_psi_batch(sorted_sticks: np.ndarray, remainder: np.ndarray, pool: float = PSI_POOL) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise `rho_psi_interval` for a descending stick matrix."""
    big = sorted_sticks >= pool
    lengths = big.sum(axis=1)
    pooled = np.where(big, 0.0, sorted_sticks).sum(axis=1) + remainder
    lo = np.empty(len(lengths))
    hi = np.empty(len(lengths))
    _psi_rows(np.ascontiguousarray(sorted_sticks), lengths.astype(np.int64), pooled, lo, hi)
    return lo, hi


def rho_constant_exact(log_rho: np.ndarray, xs: Sequence[int]) -> tuple[float, float, np.ndarray]:
    """Fit S(x)/x = c log x + b with S(x) = sum_{n <= x} log rho(n).

    Returns (c, b, S at xs).  A plain ratio S/(x log x) carries the O(1/log x)
    drift b/log x; the two-parameter fit removes it.
    """
    cs = np.cumsum(log_rho[1:])
    xs = np.asarray(xs, dtype=np.int64)
    S = cs[xs - 1]
    A = np.stack([np.log(xs.astype(np.float64)), np.ones(len(xs))], axis=1)
    (c, b), *_ = np.linalg.lstsq(A, S / xs, rcond=None)
    return float(c), float(b), S
