"""Coupling a Poisson-Dirichlet vector with the prime factors of a uniform
integer N <= x, plus the companion variable J* built from the process R.

Pipeline per replicate: GEM sticks -> ladder values Q_i -> J (product over
i >= 2) -> extra prime -> M = J * p_extra -> optimal transport of M onto the
uniform law on [1, x] -> N.
"""
from __future__ import annotations

import bisect
import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from pathlib import Path
from typing import Optional, Sequence

import mpmath
import numpy as np
from scipy import integrate

from . import primes as pr
from .pd_process import (
    DEFAULT_EPS,
    DEFAULT_TAIL_TOL,
    DEFAULT_W_MAX,
    MAX_WINDOW_RETRIES,
    GemBatch,
    GemSample,
    RWindow,
    WindowBatch,
    WindowError,
    extend_window,
    index_crossing,
    index_crossing_batch,
    padded_desc,
    sample_gem,
    sample_gem_batch,
    sample_r_window,
    sample_r_window_batch,
    sort_to_pd,
    theta_batch,
    theta_stat,
)
from .rng import derive_stream
from .stats import Estimate, StatReport, wilson

MU_BLOCK = 1 << 16


@dataclass
class CouplingSample:
    x: int
    gem: GemSample
    V: np.ndarray
    Q: tuple[int, ...]
    J: int
    p_extra: int
    M: int
    theta_x: float
    N: Optional[int] = None
    prof_N: Optional[pr.ArithProfile] = None
    l1: Optional[float] = None
    m_equals_n: Optional[bool] = None


# --------------------------------------------------------------------------
# M = J * p_extra


def _open_uniform(stream: np.random.Generator) -> float:
    u = stream.random()
    while u == 0.0:
        u = stream.random()
    return u


def _check_x(x: int, table: pr.PrimeTable) -> None:
    if x < 2:
        raise ValueError("x must be >= 2")
    if x > table.limit:
        raise pr.CapacityError(f"x={x} beyond prime table limit {table.limit}")


def build_m(gem: GemSample, u: float, x: float, table: pr.PrimeTable, ladder: pr.PrimeLadder) -> CouplingSample:
    """Deterministic part of `sample_m` given the sticks and the extra uniform."""
    log_x = math.log(x)
    Q = tuple(int(q) for q in pr.q_many(ladder, gem.sticks * log_x))
    J = math.prod(Q[1:])
    p = 1 if J > x else pr.extra_prime(table, u, x / J)
    return CouplingSample(
        x=x, gem=gem, V=sort_to_pd(gem), Q=Q, J=J, p_extra=p, M=J * p,
        theta_x=theta_stat(ladder, gem, log_x),
    )


def sample_m(stream, x: int, table: pr.PrimeTable, ladder: pr.PrimeLadder,
             tail_tol: float = DEFAULT_TAIL_TOL) -> CouplingSample:
    _check_x(x, table)
    gem = sample_gem(stream, math.log(x), tail_tol)
    return build_m(gem, _open_uniform(stream), x, table, ladder)


def capped_product(factors: np.ndarray, cap: int) -> np.ndarray:
    """Row products of a positive int matrix, saturating at `cap`."""
    out = np.ones(factors.shape[0], dtype=np.int64)
    for c in range(factors.shape[1]):
        f = factors[:, c]
        out = np.where(out <= cap // f, out * f, cap)
    return np.minimum(out, cap)


def q_matrix(ladder: pr.PrimeLadder, t: np.ndarray) -> np.ndarray:
    """Q = exp(h(t)) for a matrix of arguments; only t > lambda_0 is looked up."""
    Q = np.ones(t.shape, dtype=np.int64)
    hit = t > pr.LAMBDA_0
    if hit.any():
        Q[hit] = pr.q_many(ladder, t[hit])
    return Q


@dataclass
class MBatch:
    J: np.ndarray
    p_extra: np.ndarray
    M: np.ndarray  # values above 2x are saturated at 2x + 1
    gem: GemBatch


def sample_m_batch(stream, n: int, x: int, table: pr.PrimeTable, ladder: pr.PrimeLadder,
                   tail_tol: float = DEFAULT_TAIL_TOL) -> MBatch:
    _check_x(x, table)
    log_x = math.log(x)
    gem = sample_gem_batch(stream, n, log_x, tail_tol, width=16 if tail_tol >= pr.LAMBDA_0 else 64)
    u = stream.random(n)
    u[u == 0.0] = 0.5  # probability 2^-53 per draw
    cap = 2 * x + 1
    Q = q_matrix(ladder, gem.sticks * log_x)
    J = capped_product(Q[:, 1:], cap)
    small = J <= x
    p = np.ones(n, dtype=np.int64)
    p[small] = pr.extra_prime_many(table, u[small], x / J[small])
    return MBatch(J, p, np.where(small, J * p, J), gem)


# --------------------------------------------------------------------------
# empirical laws


@dataclass(eq=False)
class EmpiricalDist:
    """Law on [1, limit] plus one pooled atom for values above the limit.

    `mass[0]` is unused so that `mass[m]` is the mass of m.
    """

    limit: int
    mass: np.ndarray
    overflow: float
    n_samples: int

    def __post_init__(self):
        if len(self.mass) != self.limit + 1:
            raise ValueError("mass must have length limit + 1")
        total = sum(self.mass[1:]) + self.overflow
        if abs(float(total) - 1.0) > 1e-9:
            raise ValueError(f"masses sum to {float(total)}, not 1")
        if any(m < 0 for m in self.mass) or self.overflow < 0:
            raise ValueError("negative mass")

    def atoms(self) -> list:
        """Masses of values 1..limit followed by the overflow atom."""
        return list(self.mass[1:]) + [self.overflow]

    def __call__(self, m: int):
        return self.overflow if m > self.limit else self.mass[m]


def uniform_dist(x: int) -> EmpiricalDist:
    mass = np.full(x + 1, 1.0 / x)
    mass[0] = 0.0
    return EmpiricalDist(x, mass, 0.0, 0)


def dist_from_masses(masses: Sequence, overflow=0) -> EmpiricalDist:
    """Exact (e.g. Fraction) law on 1..len(masses)."""
    mass = np.array([type(overflow)(0)] + list(masses), dtype=object)
    return EmpiricalDist(len(masses), mass, overflow, 0)


def _spread_conditional(x: int, j_counts: np.ndarray, table: pr.PrimeTable) -> np.ndarray:
    """Mass on 1..x (+ overflow slot) implied by a histogram of J.

    Given J = j <= x/2 the extra prime has P[p] = log p / theta(x/j) on
    primes p <= x/j; otherwise M = J.
    """
    out = np.zeros(x + 2)
    logp = np.log(table.primes.astype(np.float64))
    for j in np.flatnonzero(j_counts[: x + 1]):
        c = j_counts[j]
        k = int(np.searchsorted(table.primes, x // j, side="right"))
        if k == 0:
            out[j] += c
            continue
        w = logp[:k] / table.theta_prefix[k - 1]
        np.add.at(out, j * table.primes[:k], c * w)
    out[x + 1] += j_counts[x + 1]
    return out


def _mu_counts_block(x, n, seed, b, table, ladder, method):
    stream = derive_stream(seed, "mu", x, b)
    mb = sample_m_batch(stream, n, x, table, ladder, tail_tol=pr.LAMBDA_0)
    if method == "frequency":
        return np.bincount(np.minimum(mb.M, x + 1), minlength=x + 2).astype(np.float64)
    return np.bincount(np.minimum(mb.J, x + 1), minlength=x + 2).astype(np.float64)


def estimate_mu(x: int, n_samples: int, master_seed: int, method: str = "frequency",
                table: pr.PrimeTable | None = None, ladder: pr.PrimeLadder | None = None,
                executor=None) -> EmpiricalDist:
    """Empirical law of M over `n_samples` replicates.

    method="frequency" is the plain histogram of M.  method="conditional"
    histograms J and integrates the extra prime out exactly, which has the
    same mean and lower variance.  Replicates are drawn in fixed blocks of
    MU_BLOCK with one derived stream each, so the result does not depend on
    how blocks are distributed over workers.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if method not in ("frequency", "conditional"):
        raise ValueError(f"unknown method {method!r}")
    table = table or pr.build_prime_table(max(x, 16))
    ladder = ladder or pr.ladder_for(math.log(x) + 2)
    sizes = [min(MU_BLOCK, n_samples - s) for s in range(0, n_samples, MU_BLOCK)]
    args = [(x, m, master_seed, b, table, ladder, method) for b, m in enumerate(sizes)]
    if executor is None:
        parts = [_mu_counts_block(*a) for a in args]
    else:
        parts = list(executor.map(_mu_counts_block, *zip(*args)))
    counts = np.sum(parts, axis=0)
    if method == "conditional":
        counts = _spread_conditional(x, counts, table)
    mass = counts[: x + 1] / n_samples
    mass[0] = 0.0
    overflow = float(counts[x + 1] / n_samples)
    # renormalise away float drift from the spreading step
    scale = 1.0 / (mass.sum() + overflow)
    return EmpiricalDist(x, mass * scale, overflow * scale, n_samples)


def tv_distance(mu: EmpiricalDist, nu: EmpiricalDist):
    """Sum of positive parts of mu - nu, the overflow counting as one atom."""
    if mu.limit != nu.limit:
        raise ValueError("distributions live on different supports")
    if mu.mass.dtype == object or nu.mass.dtype == object:
        return sum((max(a - b, 0) for a, b in zip(mu.atoms(), nu.atoms())), Fraction(0))
    d = mu.mass[1:] - nu.mass[1:]
    return float(np.clip(d, 0, None).sum() + max(mu.overflow - nu.overflow, 0.0))


def write_mu_cache(path: str | Path, dist: EmpiricalDist, seed: int) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "n_samples", "seed"])
        w.writerow([dist.limit, dist.n_samples, seed])
        w.writerow(["value", "count"])
        counts = dist.mass * dist.n_samples
        for m in np.flatnonzero(counts):
            w.writerow([int(m), repr(float(counts[m]))])
        w.writerow(["overflow", repr(float(dist.overflow * dist.n_samples))])


def read_mu_cache(path: str | Path) -> tuple[EmpiricalDist, int]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if rows[0] != ["x", "n_samples", "seed"] or rows[2] != ["value", "count"]:
        raise ValueError("not a mu cache file")
    x, n, seed = (int(v) for v in rows[1])
    mass = np.zeros(x + 1)
    overflow = 0.0
    for key, val in rows[3:]:
        if key == "overflow":
            overflow = float(val) / n
        else:
            mass[int(key)] = float(val) / n
    return EmpiricalDist(x, mass, overflow, n), seed


# --------------------------------------------------------------------------
# optimal transport between two laws on the same atoms


class TransportPlan:
    """The map f_{mu,nu}(m; a, b) on atoms 1..K (atom K+1 is the overflow).

    Works with floats or with exact Fractions.  The atom m is kept when
    a*mu(m) <= nu(m); otherwise b picks the destination i with
    z_{i-1} < b <= z_i, z being the normalised cumulative deficit of mu.
    """

    def __init__(self, mu_atoms: Sequence, nu_atoms: Sequence):
        if len(mu_atoms) != len(nu_atoms):
            raise ValueError("mu and nu need the same atoms")
        self.mu = list(mu_atoms)
        self.nu = list(nu_atoms)
        zero = self.mu[0] * 0
        self.dtv = sum((max(a - b, zero) for a, b in zip(self.mu, self.nu)), zero)
        deficit = [max(b - a, zero) for a, b in zip(self.mu, self.nu)]
        self.z: list = []
        if self.dtv > 0:
            acc = zero
            for d in deficit:
                acc += d
                self.z.append(acc / self.dtv)
            self._last = max(i for i, d in enumerate(deficit) if d > 0)
        self.exact = isinstance(zero, Fraction)
        if not self.exact:
            self._mu = np.asarray(self.mu, dtype=np.float64)
            self._nu = np.asarray(self.nu, dtype=np.float64)
            self._z = np.asarray(self.z, dtype=np.float64)

    @classmethod
    def between(cls, mu: EmpiricalDist, nu: EmpiricalDist) -> "TransportPlan":
        if mu.limit != nu.limit:
            raise ValueError("distributions live on different supports")
        return cls(mu.atoms(), nu.atoms())

    def destination(self, b) -> int:
        """Atom (1-based) receiving the mass moved with second uniform b."""
        i = bisect.bisect_left(self.z, b)
        return min(i, self._last) + 1

    def apply(self, m: int, a, b) -> int:
        k = min(m, len(self.mu)) - 1
        if self.dtv == 0 or a * self.mu[k] <= self.nu[k]:
            return m
        return self.destination(b)

    def apply_many(self, m: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Vectorised `apply` for float plans; m above the support hits the overflow atom."""
        if self.exact:
            raise TypeError("apply_many needs a float plan")
        m = np.asarray(m, dtype=np.int64)
        if self.dtv == 0:
            return m.copy()
        k = np.minimum(m, len(self._mu)) - 1
        keep = a * self._mu[k] <= self._nu[k]
        dest = np.minimum(np.searchsorted(self._z, b, side="left"), self._last) + 1
        return np.where(keep, m, dest)


@lru_cache(maxsize=16)
def _plan_for(mu: EmpiricalDist, nu: EmpiricalDist) -> TransportPlan:
    return TransportPlan.between(mu, nu)


def tv_transport(m: int, a, b, mu: EmpiricalDist, nu: EmpiricalDist) -> int:
    """f_{mu,nu}(m; a, b); the plan and its z-table are cached per pair."""
    return _plan_for(mu, nu).apply(m, a, b)


# --------------------------------------------------------------------------
# coupled samples and the l1 statistic


def l1_distance(prof_N: pr.ArithProfile, V: np.ndarray, remainder: float, log_x: float) -> float:
    """sum_i |log P_i - V_i log x| with both sequences padded by zeros.

    The undrawn sticks face P_i = 1 and add remainder * log x.
    """
    lp = [math.log(p) for p in prof_N.prime_seq]
    v = list(np.asarray(V, dtype=np.float64) * log_x)
    m = max(len(lp), len(v))
    lp += [0.0] * (m - len(lp))
    v += [0.0] * (m - len(v))
    return math.fsum(abs(a - b) for a, b in zip(lp, v)) + remainder * log_x


def sample_coupled(stream, x: int, mu_hat: EmpiricalDist, table: pr.PrimeTable,
                   ladder: pr.PrimeLadder, tail_tol: float = DEFAULT_TAIL_TOL) -> CouplingSample:
    if mu_hat.limit != x:
        raise ValueError("mu_hat was built for a different x")
    s = sample_m(stream, x, table, ladder, tail_tol)
    a, b = stream.random(), stream.random()
    N = tv_transport(s.M, a, b, mu_hat, uniform_for(x))
    s.N = N
    s.prof_N = pr.arith_profile(table, N)
    s.l1 = l1_distance(s.prof_N, s.V, s.gem.remainder, math.log(x))
    s.m_equals_n = s.M == N
    return s


@lru_cache(maxsize=8)
def uniform_for(x: int) -> EmpiricalDist:
    return uniform_dist(x)


def l1_bound_rhs(log_x_over_n: float, s_n: float, theta_x: float, remainder_log_x: float) -> float:
    """Right-hand side log(x/N) + 2 log s(N) + 2 Theta, plus the truncation slack.

    Pairing undrawn sticks with zeros moves l1 by at most twice the
    undrawn mass; a relative 1e-12 absorbs rounding.
    """
    rhs = log_x_over_n + 2.0 * math.log(s_n) + 2.0 * theta_x
    return rhs + 2.0 * remainder_log_x + 1e-12 * (1.0 + abs(rhs))


def l1_bound_check(s: CouplingSample, theta_override: float | None = None) -> bool:
    if not s.m_equals_n:
        raise ValueError("l1_bound_check needs a sample with M == N")
    th = s.theta_x if theta_override is None else theta_override
    log_x = math.log(s.x)
    return s.l1 <= l1_bound_rhs(math.log(s.x / s.N), s.prof_N.s, th, s.gem.remainder * log_x)


@dataclass
class CoupledBatch:
    x: int
    M: np.ndarray
    N: np.ndarray
    l1: np.ndarray
    theta: np.ndarray
    s_N: np.ndarray
    remainder: np.ndarray

    @property
    def m_equals_n(self) -> np.ndarray:
        return self.M == self.N

    def l1_bound_ok(self) -> np.ndarray:
        """Per-sample l1 bound check; rows with M != N report True (not applicable)."""
        log_x = math.log(self.x)
        rhs = np.log(self.x / self.N) + 2.0 * np.log(self.s_N.astype(np.float64)) + 2.0 * self.theta
        rhs = rhs + 2.0 * self.remainder * log_x + 1e-12 * (1.0 + np.abs(rhs))
        return ~self.m_equals_n | (self.l1 <= rhs)


def l1_batch(log_p_desc: np.ndarray, V_desc: np.ndarray, remainder: np.ndarray, log_x: float) -> np.ndarray:
    w = max(log_p_desc.shape[1], V_desc.shape[1])
    a = np.zeros((len(remainder), w))
    b = np.zeros((len(remainder), w))
    a[:, : log_p_desc.shape[1]] = log_p_desc
    b[:, : V_desc.shape[1]] = V_desc * log_x
    return np.abs(a - b).sum(axis=1) + remainder * log_x


def sample_coupled_batch(stream, n: int, x: int, plan: TransportPlan, table: pr.PrimeTable,
                         ladder: pr.PrimeLadder, profiles: pr.ProfileArrays,
                         tail_tol: float = DEFAULT_TAIL_TOL) -> CoupledBatch:
    mb = sample_m_batch(stream, n, x, table, ladder, tail_tol)
    ab = stream.random((n, 2))
    N = plan.apply_many(mb.M, ab[:, 0], ab[:, 1])
    if np.any(N > x) or np.any(N < 1):
        raise RuntimeError("transport produced a value outside [1, x]")
    log_x = math.log(x)
    l1 = l1_batch(profiles.log_primes_desc[N], mb.gem.sorted_desc(), mb.gem.remainder, log_x)
    return CoupledBatch(x, mb.M, N, l1, theta_batch(ladder, mb.gem, log_x), profiles.s[N], mb.gem.remainder)


def independent_l1_batch(stream, n: int, x: int, profiles: pr.ProfileArrays,
                         tail_tol: float = DEFAULT_TAIL_TOL) -> np.ndarray:
    """l1 statistic when V and a uniform N <= x are drawn independently."""
    log_x = math.log(x)
    gem = sample_gem_batch(stream, n, log_x, tail_tol)
    N = stream.integers(1, x + 1, size=n)
    return l1_batch(profiles.log_primes_desc[N], gem.sorted_desc(), gem.remainder, log_x)


# --------------------------------------------------------------------------
# J* from the process R


def window_defaults(x: float, eps: float = DEFAULT_EPS, w_max: float = DEFAULT_W_MAX) -> tuple[float, float]:
    return eps / math.log(x), w_max


def _jstar_points(ladder: pr.PrimeLadder, w: np.ndarray, y: np.ndarray, x: int):
    """(T*, Q*) of the points with Y > e^-gamma.

    Above the ladder top h(y) = y is used for T* and Q* is x + 1: such a
    point always exceeds x, only its rank matters, and y/h(y) there is
    within 1e-3 of 1.
    """
    keep = y > pr.LAMBDA_0
    w, y = w[keep], y[keep]
    inside = y <= ladder.t_max
    h = pr.h_many(ladder, y, beyond="identity")
    q = np.full(len(y), x + 1, dtype=np.int64)
    if inside.any():
        q[inside] = pr.q_many(ladder, y[inside])
    return w * y / h, q


def jstar_prefix(q_desc: Sequence[int], x: int) -> tuple[int, int]:
    """Product of the longest prefix of `q_desc` staying <= x, and its length."""
    prod = 1
    for k, q in enumerate(q_desc):
        if prod * int(q) > x:
            return prod, k
        prod *= int(q)
    return prod, len(q_desc)


def jstar_sample(win: RWindow, ladder: pr.PrimeLadder, x: int, certify: bool = True) -> int:
    """Product of the longest T*-descending prefix of Q* staying <= x.

    Raises WindowError when the window cannot certify the prefix: points
    below w_min have T* < w_min * sup(y/h(y)), so the stopping point must
    lie above that level.  With certify=False the window's points are
    taken as the whole configuration.
    """
    t, q = _jstar_points(ladder, win.w, win.y, x)
    order = np.argsort(-t, kind="stable")
    prod, k = jstar_prefix(q[order], x)
    if not certify:
        return prod
    if k < len(order) and t[order[k]] > win.w_min * pr.ratio_sup(ladder):
        return prod
    raise WindowError("J* prefix not certified inside the window")


def j_from_window(win: RWindow, ladder: pr.PrimeLadder, x: int) -> int:
    """J = prod Q_i over the indexed points above the crossing."""
    idx = index_crossing(win, math.log(x))
    if not idx.crossing_valid:
        raise WindowError("crossing not resolved inside the window")
    t = idx.y[idx.y > pr.LAMBDA_0]
    return math.prod(int(q) for q in pr.q_many(ladder, t))


def resolve_j_pair(stream, win: RWindow, ladder: pr.PrimeLadder, x: int,
                   max_retries: int = MAX_WINDOW_RETRIES) -> tuple[int, int, int]:
    """(J, J*, retries), widening the window by factors of 10 as needed."""
    for retries in range(max_retries + 1):
        try:
            return j_from_window(win, ladder, x), jstar_sample(win, ladder, x), retries
        except WindowError:
            win = extend_window(stream, win, win.w_min / 10.0)
    raise WindowError(f"window unresolved after {max_retries} extensions")


def jstar_batch(batch: WindowBatch, ladder: pr.PrimeLadder, x: int,
                desc: tuple | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised `jstar_sample`: (J*, certified flag) per window."""
    Y, W, G = desc if desc is not None else padded_desc(batch)
    n = len(batch)
    present = (G >= 0) & (Y > pr.LAMBDA_0)
    T = np.full(Y.shape, -np.inf)
    Qs = np.ones(Y.shape, dtype=np.int64)
    if present.any():
        t, q = _jstar_points(ladder, W[present], Y[present], x)
        T[present] = t
        Qs[present] = q
    order = np.argsort(-T, axis=1, kind="stable")
    T = np.take_along_axis(T, order, axis=1)
    Qs = np.take_along_axis(Qs, order, axis=1)
    prod = np.ones(n, dtype=np.int64)
    stopped = np.zeros(n, dtype=bool)
    stop_t = np.full(n, -np.inf)
    for c in range(Y.shape[1]):
        live = ~stopped & np.isfinite(T[:, c])
        if not live.any():
            break
        over = live & (prod > x // Qs[:, c])
        stop_t[over] = T[over, c]
        stopped |= over
        grow = live & ~over
        prod[grow] *= Qs[grow, c]
    ok = stopped & (stop_t > batch.w_min * pr.ratio_sup(ladder))
    return prod, ok


def j_batch(batch: WindowBatch, ladder: pr.PrimeLadder, x: int,
            desc: tuple | None = None) -> tuple[np.ndarray, np.ndarray]:
    """J from each window's crossing; (J, valid flag)."""
    Y, _, G = desc if desc is not None else padded_desc(batch)
    cb = index_crossing_batch(batch, math.log(x))
    zero_col = np.where(cb.valid, np.argmax(G == cb.zero[:, None], axis=1), 0)
    above = (np.arange(Y.shape[1])[None, :] < zero_col[:, None]) & (G >= 0)
    Q = np.ones(Y.shape, dtype=np.int64)
    hit = above & (Y > pr.LAMBDA_0)
    if hit.any():
        Q[hit] = pr.q_many(ladder, Y[hit])
    return capped_product(Q, 2 * x + 1), cb.valid


def simulate_j_pairs(x: int, n: int, seed: int, eps: float = DEFAULT_EPS, w_max: float = DEFAULT_W_MAX,
                     ladder: pr.PrimeLadder | None = None, block: int = MU_BLOCK, label: str = "jj"):
    """(J, J*, total window extensions) for n replicates, one window each."""
    ladder = ladder or pr.ladder_for(math.log(x) + 2)
    w_min, w_max = window_defaults(x, eps, w_max)
    Js, Jss = [], []
    retries = 0
    for b, start in enumerate(range(0, n, block)):
        m = min(block, n - start)
        stream = derive_stream(seed, label, x, b)
        batch = sample_r_window_batch(stream, m, w_min, w_max)
        desc = padded_desc(batch)
        J, okj = j_batch(batch, ladder, x, desc)
        Js_, oks = jstar_batch(batch, ladder, x, desc)
        for i in np.flatnonzero(~(okj & oks)):
            ext = derive_stream(seed, label, "extend", x, b, int(i))
            J[i], Js_[i], r = resolve_j_pair(ext, batch.window(int(i)), ladder, x)
            retries += r
        Js.append(J)
        Jss.append(Js_)
    return np.concatenate(Js), np.concatenate(Jss), retries


def j_vs_jstar_rate(x: int, n_samples: int, seed: int, **kw) -> StatReport:
    """Frequency of J != J* with a Wilson interval."""
    J, Js, _ = simulate_j_pairs(x, n_samples, seed, **kw)
    return wilson(int(np.count_nonzero(J != Js)), n_samples)


def _prime_power_weights(limit: int) -> tuple[np.ndarray, np.ndarray]:
    if limit < 2:
        return np.empty(0), np.empty(0)
    q, _, base = pr.prime_powers(limit)
    return np.log(q.astype(np.float64)), np.log(base.astype(np.float64))


def jstar_pmf_numeric(j: int, x: int, table: pr.PrimeTable | None = None) -> Estimate:
    """P[J* = j] = int_0^inf T_y(t) j^{-1-t} / zeta(1+t) dt with y = x/j.

    T_y(t) = sum_{q > y} Lambda(q) q^{-1-t} is taken as the exact complement
    -zeta'/zeta(1+t) - sum_{q <= y} Lambda(q) q^{-1-t}, so no prime-power
    truncation enters.  The t-range is cut where x^{-t} < 1e-13 and the
    remainder is bounded with psi(u) <= 1.04 u.
    """
    if not 1 <= j <= x:
        raise ValueError("need 1 <= j <= x")
    log_q, lam = _prime_power_weights(x // j)
    log_j = math.log(j)
    log_x = math.log(x)

    def f(t: float) -> float:
        s = mpmath.mpf(1 + t)
        z = mpmath.zeta(s)
        dz = mpmath.zeta(s, 1, 1)
        head = float(np.sum(lam * np.exp(-(1 + t) * log_q))) if len(log_q) else 0.0
        tail = float(-dz / z) - head
        return max(tail, 0.0) * math.exp(-(1 + t) * log_j) / float(z)

    t_cut = 13 * math.log(10) / log_x
    total, err = 0.0, 0.0
    edges = [0.0, min(1.0, t_cut), t_cut] if t_cut > 1 else [0.0, t_cut]
    for a, b in zip(edges[:-1], edges[1:]):
        v, e = integrate.quad(f, a, b, epsabs=1e-12, epsrel=1e-10, limit=200)
        total += v
        err += e
    # T_y(t) <= 1.04 y^{-t}/t and 1/zeta(1+t) <= 1 beyond t_cut
    bound = 1.04 * math.exp(-t_cut * log_x) / (j * t_cut * log_x)
    return Estimate(total, err + bound + 1e-14)
