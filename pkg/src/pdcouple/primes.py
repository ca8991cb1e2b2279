"""Integer substrate: sieve, Chebyshev theta, the prime-power ladder and
arithmetic profiles of integers.

Everything here is exact integer arithmetic plus natural-log sums computed
from the sieve; no asymptotic formula is ever used at runtime.
"""
from __future__ import annotations

import bisect
import csv
import math
import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

EULER_GAMMA = 0.57721566490153286060651209008240243
LAMBDA_0 = math.exp(-EULER_GAMMA)

MAX_TABLE_LIMIT = 10**8
SIEVE_MAGIC = b"PDC1"


class CapacityError(ValueError):
    """Requested size is outside what a table can hold."""


class LadderCoverageError(ValueError):
    """Argument lies above the last rung of a ladder."""


def sieve_bits(limit: int) -> np.ndarray:
    """Boolean primality array for 0..limit."""
    is_prime = np.ones(limit + 1, dtype=bool)
    is_prime[:2] = False
    for p in range(2, math.isqrt(limit) + 1):
        if is_prime[p]:
            is_prime[p * p :: p] = False
    return is_prime


def _theta_prefix(primes: np.ndarray) -> np.ndarray:
    # extended precision keeps the accumulated error well under 1e-12 per term
    logs = np.log(primes.astype(np.longdouble))
    return np.cumsum(logs).astype(np.float64)


@dataclass(frozen=True)
class PrimeTable:
    limit: int
    primes: np.ndarray
    theta_prefix: np.ndarray
    smallest_factor: np.ndarray

    @property
    def prime_count(self) -> int:
        return len(self.primes)


def build_prime_table(limit: int) -> PrimeTable:
    if not 2 <= limit <= MAX_TABLE_LIMIT:
        raise CapacityError(f"sieve limit {limit} outside [2, {MAX_TABLE_LIMIT}]")
    return _table_from_bits(limit, sieve_bits(limit))


def _table_from_bits(limit: int, is_prime: np.ndarray) -> PrimeTable:
    primes = np.flatnonzero(is_prime).astype(np.int64)
    spf = np.zeros(limit + 1, dtype=np.int32)
    for p in primes[primes <= math.isqrt(limit)]:
        p = int(p)
        view = spf[p * p :: p]
        view[view == 0] = p
    spf[primes] = primes
    for arr in (primes, spf):
        arr.setflags(write=False)
    theta_prefix = _theta_prefix(primes)
    theta_prefix.setflags(write=False)
    return PrimeTable(limit, primes, theta_prefix, spf)


def write_sieve_cache(path: str | Path, table: PrimeTable) -> None:
    """Binary cache: magic, little-endian u64 limit, then the primality bitset."""
    bits = np.zeros(table.limit + 1, dtype=bool)
    bits[table.primes] = True
    payload = np.packbits(bits, bitorder="little").tobytes()
    with open(path, "wb") as fh:
        fh.write(SIEVE_MAGIC)
        fh.write(struct.pack("<Q", table.limit))
        fh.write(payload)


def read_sieve_cache(path: str | Path) -> PrimeTable:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != SIEVE_MAGIC:
        raise ValueError(f"{path}: bad magic {data[:4]!r}")
    (limit,) = struct.unpack("<Q", data[4:12])
    if not 2 <= limit <= MAX_TABLE_LIMIT:
        raise CapacityError(f"cached limit {limit} out of range")
    packed = np.frombuffer(data[12:], dtype=np.uint8)
    bits = np.unpackbits(packed, bitorder="little", count=limit + 1).astype(bool)
    return _table_from_bits(limit, bits)


def theta(table: PrimeTable, y: float) -> float:
    """Chebyshev's theta: sum of log p over primes p <= y."""
    if y < 0 or y > table.limit:
        raise ValueError(f"y={y} outside [0, {table.limit}]")
    k = int(np.searchsorted(table.primes, math.floor(y), side="right"))
    return float(table.theta_prefix[k - 1]) if k else 0.0


def theta_many(table: PrimeTable, y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if np.any(y > table.limit):
        raise ValueError("theta argument beyond table limit")
    k = np.searchsorted(table.primes, np.floor(y), side="right")
    out = np.zeros(y.shape)
    nz = k > 0
    out[nz] = table.theta_prefix[k[nz] - 1]
    return out


def extra_prime(table: PrimeTable, u: float, y: float) -> int:
    """Smallest element p of {1} U primes with theta(p) >= u * theta(y)."""
    if not 0.0 < u < 1.0:
        raise ValueError(f"u={u} must lie in (0, 1)")
    th = theta(table, y)
    if th == 0.0:
        return 1
    i = int(np.searchsorted(table.theta_prefix, u * th, side="left"))
    return int(table.primes[i])


def extra_prime_many(table: PrimeTable, u: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Vectorised `extra_prime`; entries with y < 2 give 1."""
    th = theta_many(table, y)
    idx = np.searchsorted(table.theta_prefix, u * th, side="left")
    idx = np.minimum(idx, len(table.primes) - 1)
    return np.where(th > 0.0, table.primes[idx], 1)


# --------------------------------------------------------------------------
# prime-power ladder


@dataclass(frozen=True)
class PrimeLadder:
    q: np.ndarray
    v: np.ndarray
    base: np.ndarray
    lam: np.ndarray
    log_q: np.ndarray
    gamma: float = EULER_GAMMA

    @property
    def t_max(self) -> float:
        return float(self.lam[-1])

    def covers(self, t) -> bool:
        return bool(np.all(np.asarray(t) <= self.lam[-1]))


def prime_powers(limit: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sorted prime powers <= limit with their exponents and base primes."""
    primes = np.flatnonzero(sieve_bits(limit)).astype(np.int64)
    qs, vs, ps = [primes], [np.ones_like(primes)], [primes]
    small = primes[primes <= math.isqrt(limit)]
    e = 2
    while len(small):
        pw = small**e
        keep = pw <= limit
        if not keep.any():
            break
        qs.append(pw[keep])
        vs.append(np.full(int(keep.sum()), e, dtype=np.int64))
        ps.append(small[keep])
        small = small[keep]
        e += 1
    q = np.concatenate(qs)
    order = np.argsort(q, kind="stable")
    return q[order], np.concatenate(vs)[order], np.concatenate(ps)[order]


def build_ladder(t_max: float) -> PrimeLadder:
    """Ladder of rungs lambda_j, extended until lambda_J > t_max."""
    if t_max < 1:
        raise ValueError("t_max must be >= 1")
    limit = int(math.exp(t_max) * 1.2) + 64
    while True:
        q, v, base = prime_powers(limit)
        recip = 1.0 / (v.astype(np.longdouble) * q.astype(np.longdouble))
        sums = np.concatenate(([np.longdouble(0)], np.cumsum(recip)))
        lam = np.exp(sums - np.longdouble(EULER_GAMMA)).astype(np.float64)
        if lam[-1] > t_max:
            break
        limit *= 2
    # trim to the first rung exceeding t_max
    J = int(np.searchsorted(lam, t_max, side="right"))
    q, v, base, lam = q[:J], v[:J], base[:J], lam[: J + 1]
    log_q = np.log(q.astype(np.float64))
    for arr in (q, v, base, lam, log_q):
        arr.setflags(write=False)
    return PrimeLadder(q=q, v=v, base=base, lam=lam, log_q=log_q)


@lru_cache(maxsize=8)
def _cached_ladder(t_cap: float) -> PrimeLadder:
    return build_ladder(t_cap)


def ladder_for(t_max: float) -> PrimeLadder:
    """Process-wide ladder covering at least t_max (grown on demand)."""
    return _cached_ladder(float(math.ceil(max(t_max, 1.0))))


def step_h(ladder: PrimeLadder, t: float) -> tuple[float, float]:
    """(h(t), r(t)) with h the ladder step function and r = |h - t|."""
    if t <= 0:
        raise ValueError("h is defined for t > 0 only")
    if t > ladder.lam[-1]:
        raise LadderCoverageError(f"t={t} above ladder top {ladder.lam[-1]}")
    j = bisect.bisect_left(ladder.lam, t)
    h = float(ladder.log_q[j - 1]) if j > 0 else 0.0
    return h, abs(h - t)


def rung_index(ladder: PrimeLadder, t: np.ndarray) -> np.ndarray:
    """j with lambda_{j-1} < t <= lambda_j (0 when t <= lambda_0).

    Values above the ladder come back as len(lam), callers mask them.
    """
    return np.searchsorted(ladder.lam, t, side="left")


def h_many(ladder: PrimeLadder, t: np.ndarray, beyond: str = "raise") -> np.ndarray:
    """Vectorised h.  `beyond="identity"` sets h(t)=t above the ladder top."""
    t = np.asarray(t, dtype=np.float64)
    j = rung_index(ladder, t)
    over = j > len(ladder.q)
    if over.any() and beyond == "raise":
        raise LadderCoverageError(f"max t={t.max()} above ladder top {ladder.lam[-1]}")
    log_q = np.concatenate(([0.0], ladder.log_q, [0.0]))
    h = log_q[np.minimum(j, len(ladder.q) + 1)]
    if over.any():
        h = np.where(over, t, h)
    return h


def r_many(ladder: PrimeLadder, t: np.ndarray, beyond: str = "raise") -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    return np.abs(h_many(ladder, t, beyond=beyond) - t)


def q_many(ladder: PrimeLadder, t: np.ndarray) -> np.ndarray:
    """exp(h(t)) as exact integers (1 below lambda_0)."""
    j = rung_index(ladder, t)
    if np.any(j > len(ladder.q)):
        raise LadderCoverageError("argument above ladder top")
    q = np.concatenate(([1], ladder.q))
    return q[j]


def dump_ladder_csv(ladder: PrimeLadder, path: str | Path) -> None:
    """Columns j,q_j,v_j,lambda_j; row 0 carries lambda_0 with q_0 = 1."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["j", "q_j", "v_j", "lambda_j"])
        w.writerow([0, 1, 0, repr(float(ladder.lam[0]))])
        for j in range(1, len(ladder.lam)):
            w.writerow([j, int(ladder.q[j - 1]), int(ladder.v[j - 1]), repr(float(ladder.lam[j]))])


def r_sup(ladder: PrimeLadder) -> float:
    """sup r(t) over the covered range (attained at a rung endpoint)."""
    lo = ladder.lam[:-1]
    hi = ladder.lam[1:]
    cand = np.maximum(np.abs(ladder.log_q - lo), np.abs(ladder.log_q - hi))
    return float(max(cand.max(), ladder.lam[0]))


def r_decay_constant(ladder: PrimeLadder, t_from: float = 1.0) -> float:
    """Measured sup of r(t) * t**2 over t >= t_from inside the ladder."""
    lo = ladder.lam[:-1]
    hi = ladder.lam[1:]
    sel = hi >= t_from
    cand = np.maximum(np.abs(ladder.log_q - lo), np.abs(ladder.log_q - hi)) * hi**2
    return float(cand[sel].max())


def ratio_sup(ladder: PrimeLadder) -> float:
    """sup of y / h(y) over y > lambda_0 (1 above the ladder)."""
    return float(max(1.0, np.max(ladder.lam[1:] / ladder.log_q)))


# --------------------------------------------------------------------------
# arithmetic profiles


@dataclass(frozen=True)
class ArithProfile:
    n: int
    prime_seq: tuple[int, ...]
    s: int
    flat: int
    omega: int
    big_omega: int

    def factorization(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for p in self.prime_seq:
            out[p] = out.get(p, 0) + 1
        return out


def _factor_small(table: PrimeTable, n: int) -> list[int]:
    out = []
    spf = table.smallest_factor
    while n > 1:
        p = int(spf[n])
        out.append(p)
        n //= p
    return out


def _factor_trial(table: PrimeTable, n: int) -> list[int]:
    out = []
    for p in table.primes:
        p = int(p)
        if p * p > n:
            break
        while n % p == 0:
            out.append(p)
            n //= p
        if n <= table.limit:
            return out + _factor_small(table, n)
    if n > 1:
        out.append(n)
    return out


def factor(table: PrimeTable, n: int) -> list[int]:
    """Prime factors of n with multiplicity, ascending."""
    if n < 1:
        raise ValueError("n must be a positive integer")
    if n <= table.limit:
        return _factor_small(table, n)
    if n > table.limit**2:
        raise CapacityError(f"n={n} exceeds limit**2 = {table.limit ** 2}")
    return sorted(_factor_trial(table, n))


def arith_profile(table: PrimeTable, n: int) -> ArithProfile:
    ps = factor(table, int(n))
    counts: dict[int, int] = {}
    for p in ps:
        counts[p] = counts.get(p, 0) + 1
    s = 1
    for p, e in counts.items():
        if e >= 2:
            s *= p**e
    return ArithProfile(
        n=int(n),
        prime_seq=tuple(sorted(ps, reverse=True)),
        s=s,
        flat=int(n) // s,
        omega=len(counts),
        big_omega=len(ps),
    )


@dataclass(frozen=True)
class ProfileArrays:
    """Per-integer profile columns for 1..x, indexed by n."""

    x: int
    log_primes_desc: np.ndarray  # (x+1, width), zero padded
    s: np.ndarray
    big_omega: np.ndarray

    @property
    def width(self) -> int:
        return self.log_primes_desc.shape[1]


def profile_arrays(table: PrimeTable, x: int) -> ProfileArrays:
    if x > table.limit:
        raise CapacityError(f"x={x} beyond table limit {table.limit}")
    spf = table.smallest_factor
    rem = np.arange(x + 1, dtype=np.int64)
    rem[0] = 1
    cols = []
    while True:
        active = rem > 1
        if not active.any():
            break
        p = np.where(active, spf[rem], 1).astype(np.int64)
        cols.append(p)
        rem //= p
    asc = np.stack(cols, axis=1) if cols else np.ones((x + 1, 1), dtype=np.int64)
    # a prime has exponent >= 2 iff it repeats in the ascending row
    same_prev = np.zeros_like(asc, dtype=bool)
    same_prev[:, 1:] = (asc[:, 1:] == asc[:, :-1]) & (asc[:, 1:] > 1)
    same_next = np.zeros_like(same_prev)
    same_next[:, :-1] = same_prev[:, 1:]
    repeated = same_prev | same_next
    s = np.prod(np.where(repeated, asc, 1), axis=1)
    s[0] = 1
    big_omega = (asc > 1).sum(axis=1)
    logs = np.where(asc > 1, np.log(asc.astype(np.float64)), 0.0)
    desc = np.sort(logs, axis=1)[:, ::-1].copy()
    return ProfileArrays(x=x, log_primes_desc=desc, s=s, big_omega=big_omega)
