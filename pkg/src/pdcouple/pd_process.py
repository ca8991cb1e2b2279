"""GEM / Poisson-Dirichlet sampling and the Poisson process R with intensity
exp(-w*y) dw dy, truncated to a window of w values.

Scalar samplers mirror the definitions one draw at a time; the `*_batch`
variants produce the same laws for many replicates with numpy.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import special

from .primes import LAMBDA_0, PrimeLadder, r_decay_constant, r_many, r_sup
from .stats import Estimate, MomentAccumulator

DEFAULT_TAIL_TOL = 1e-9 * LAMBDA_0
DEFAULT_EPS = 1e-3
DEFAULT_W_MAX = 200.0
MAX_WINDOW_RETRIES = 12


class WindowError(RuntimeError):
    """The window does not resolve the requested quantity; widen w_min."""


# --------------------------------------------------------------------------
# GEM


@dataclass(frozen=True)
class GemSample:
    sticks: np.ndarray
    remainder: float
    uniforms_used: int

    @property
    def total(self) -> float:
        return math.fsum(self.sticks) + self.remainder


def _stop_threshold(log_x: float, tail_tol: float) -> float:
    return min(tail_tol, LAMBDA_0) / log_x


def gem_from_uniforms(uniforms, log_x: float, tail_tol: float = DEFAULT_TAIL_TOL) -> GemSample:
    """Stick-break the given uniforms until the stopping rule fires."""
    thr = _stop_threshold(log_x, tail_tol)
    rem = 1.0
    sticks = []
    for k, u in enumerate(uniforms, 1):
        sticks.append(u * rem)
        rem *= 1.0 - u
        if rem < thr:
            return GemSample(np.array(sticks), rem, k)
    raise ValueError("uniform stream exhausted before the stopping rule fired")


def sample_gem(stream: np.random.Generator, log_x: float, tail_tol: float = DEFAULT_TAIL_TOL) -> GemSample:
    """GEM(1) sticks drawn until remainder * log_x < min(tail_tol, e^-gamma).

    Every undrawn stick is then below e^-gamma / log_x, so it maps to Q = 1
    and contributes exactly its own mass to Theta.
    """
    if log_x <= 0 or tail_tol <= 0:
        raise ValueError("log_x and tail_tol must be positive")

    def draws():
        while True:
            yield stream.random()

    return gem_from_uniforms(draws(), log_x, tail_tol)


def sort_to_pd(g: GemSample) -> np.ndarray:
    return np.sort(g.sticks)[::-1]


def theta_stat(ladder: PrimeLadder, g: GemSample, log_x: float) -> float:
    """Theta_x = sum r(L_i log x); the undrawn tail adds exactly remainder*log x."""
    t = np.asarray(g.sticks) * log_x
    return math.fsum(r_many(ladder, t)) + g.remainder * log_x


@dataclass
class GemBatch:
    """Zero-padded stick matrix; row i holds `length[i]` drawn sticks."""

    sticks: np.ndarray
    remainder: np.ndarray
    length: np.ndarray

    def __len__(self) -> int:
        return self.sticks.shape[0]

    def row(self, i: int) -> GemSample:
        k = int(self.length[i])
        return GemSample(self.sticks[i, :k].copy(), float(self.remainder[i]), k)

    def sorted_desc(self) -> np.ndarray:
        return -np.sort(-self.sticks, axis=1)


def gem_batch_from_uniforms(u: np.ndarray, log_x: float, tail_tol: float = DEFAULT_TAIL_TOL) -> GemBatch:
    thr = _stop_threshold(log_x, tail_tol)
    rem_after = np.cumprod(1.0 - u, axis=1)
    rem_before = np.empty_like(rem_after)
    rem_before[:, 0] = 1.0
    rem_before[:, 1:] = rem_after[:, :-1]
    hit = rem_after < thr
    if not hit.any(axis=1).all():
        raise ValueError("some rows never reached the stopping rule")
    length = hit.argmax(axis=1) + 1
    cols = np.arange(u.shape[1])
    sticks = np.where(cols[None, :] < length[:, None], u * rem_before, 0.0)
    remainder = rem_after[np.arange(u.shape[0]), length - 1]
    width = int(length.max())
    return GemBatch(sticks[:, :width].copy(), remainder, length)


def sample_gem_batch(
    stream: np.random.Generator, n: int, log_x: float, tail_tol: float = DEFAULT_TAIL_TOL, width: int = 64
) -> GemBatch:
    u = stream.random((n, width))
    thr = _stop_threshold(log_x, tail_tol)
    short = np.cumprod(1.0 - u, axis=1)[:, -1] >= thr
    while short.any():
        # rare rows need more uniforms; widen the whole block for them
        extra = stream.random((int(short.sum()), width))
        grown = np.ones((n, u.shape[1] + width))
        grown[:, : u.shape[1]] = u
        grown[:, u.shape[1]:] = 0.0
        grown[short, u.shape[1]:] = extra
        u = grown
        short = np.cumprod(1.0 - u, axis=1)[:, -1] >= thr
    return gem_batch_from_uniforms(u, log_x, tail_tol)


def theta_batch(ladder: PrimeLadder, gem: GemBatch, log_x: float) -> np.ndarray:
    return r_many(ladder, gem.sticks * log_x).sum(axis=1) + gem.remainder * log_x


# --------------------------------------------------------------------------
# the Poisson process R on a window


@dataclass(frozen=True)
class RWindow:
    w: np.ndarray
    y: np.ndarray
    w_min: float
    w_max: float
    lump: float

    def __post_init__(self):
        if len(self.w) > 1 and np.any(np.diff(self.w) <= 0):
            raise ValueError("window W values must be strictly increasing")


def _points_exponential_spacing(stream, w_min: float, w_max: float) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = math.log(w_min), math.log(w_max)
    logs = []
    s = lo + stream.exponential()
    while s < hi:
        logs.append(s)
        s += stream.exponential()
    w = np.exp(np.array(logs))
    y = stream.exponential(1.0 / w) if len(w) else np.empty(0)
    return w, np.asarray(y, dtype=np.float64)


def sample_r_window(stream: np.random.Generator, w_min: float, w_max: float) -> RWindow:
    """Points of R with W in [w_min, w_max] plus the lumped Y-mass above w_max.

    log W is a rate-one Poisson process (exponential spacings), Y | W is
    exponential with rate W, and the lump is exponential with rate w_max.
    """
    if not 0 < w_min < w_max:
        raise ValueError("need 0 < w_min < w_max")
    w, y = _points_exponential_spacing(stream, w_min, w_max)
    lump = float(stream.exponential(1.0 / w_max))
    return RWindow(w, y, w_min, w_max, lump)


def extend_window(stream: np.random.Generator, win: RWindow, new_w_min: float) -> RWindow:
    """Add the independent points with W in [new_w_min, win.w_min)."""
    if not 0 < new_w_min < win.w_min:
        raise ValueError("new_w_min must lie below the current window")
    w, y = _points_exponential_spacing(stream, new_w_min, win.w_min)
    return RWindow(np.concatenate([w, win.w]), np.concatenate([y, win.y]), new_w_min, win.w_max, win.lump)


def dump_window_csv(win: RWindow, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["W", "Y"])
        for w, y in zip(win.w, win.y):
            wr.writerow([repr(float(w)), repr(float(y))])


@dataclass(frozen=True)
class IndexedR:
    y: np.ndarray
    w: np.ndarray
    s0: float
    s1: float
    y0: float
    w0: float
    lump: float
    crossing_valid: bool


def index_crossing(win: RWindow, log_x: float) -> IndexedR:
    """Label points so that S_1 <= log x < S_0, scanning from the largest W."""
    cum = win.lump
    if cum > log_x:
        return IndexedR(np.empty(0), np.empty(0), math.nan, math.nan, math.nan, math.nan, win.lump, False)
    for k in range(len(win.w) - 1, -1, -1):
        nxt = cum + win.y[k]
        if nxt > log_x:
            return IndexedR(win.y[k + 1:].copy(), win.w[k + 1:].copy(), nxt, cum,
                            float(win.y[k]), float(win.w[k]), win.lump, True)
        cum = nxt
    return IndexedR(win.y.copy(), win.w.copy(), math.nan, cum, math.nan, math.nan, win.lump, False)


def gem_from_r(idx: IndexedR, log_x: float) -> GemSample:
    """(1 - S_1/log x, Y_1/log x, Y_2/log x, ...) with the lump as remainder."""
    if not idx.crossing_valid:
        raise WindowError("crossing not resolved inside the window")
    sticks = np.concatenate(([1.0 - idx.s1 / log_x], idx.y / log_x))
    return GemSample(sticks, idx.lump / log_x, 0)


def theta_from_r(ladder: PrimeLadder, idx: IndexedR, log_x: float) -> float:
    """r(L_1 log x) + sum r(Y_i) over indexed points, lump added exactly."""
    head = r_many(ladder, np.array([log_x - idx.s1]))[0]
    return float(head + math.fsum(r_many(ladder, idx.y)) + idx.lump)


def resolve_window(stream, win: RWindow, ok, max_retries: int = MAX_WINDOW_RETRIES) -> tuple[RWindow, int]:
    """Widen the window by factors of 10 until `ok(window)` holds."""
    retries = 0
    while not ok(win):
        if retries >= max_retries:
            raise WindowError(f"window unresolved after {retries} extensions")
        win = extend_window(stream, win, win.w_min / 10.0)
        retries += 1
    return win, retries


@dataclass
class WindowBatch:
    """Many windows at once; points of window i live in [start[i], start[i]+count[i])."""

    w: np.ndarray
    y: np.ndarray
    start: np.ndarray
    count: np.ndarray
    lump: np.ndarray
    w_min: float
    w_max: float

    def __len__(self) -> int:
        return len(self.lump)

    @property
    def seg(self) -> np.ndarray:
        return np.repeat(np.arange(len(self.count)), self.count)

    def window(self, i: int) -> RWindow:
        a, c = int(self.start[i]), int(self.count[i])
        return RWindow(self.w[a:a + c].copy(), self.y[a:a + c].copy(), self.w_min, self.w_max, float(self.lump[i]))


def sample_r_window_batch(stream: np.random.Generator, n: int, w_min: float, w_max: float) -> WindowBatch:
    """Batch version of `sample_r_window`.

    Given the count, Poisson points in log w are i.i.d. uniform, so the
    points are drawn as sorted uniforms per window.
    """
    count = stream.poisson(math.log(w_max / w_min), size=n).astype(np.int64)
    total = int(count.sum())
    start = np.concatenate(([0], np.cumsum(count)[:-1])).astype(np.int64)
    seg = np.repeat(np.arange(n), count)
    logw = math.log(w_min) + stream.random(total) * math.log(w_max / w_min)
    order = np.lexsort((logw, seg))
    w = np.exp(logw[order])
    y = stream.exponential(1.0, size=total) / w
    lump = stream.exponential(1.0, size=n) / w_max
    return WindowBatch(w, y, start, count, lump, w_min, w_max)


@dataclass
class CrossingBatch:
    valid: np.ndarray
    s1: np.ndarray
    s0: np.ndarray
    zero: np.ndarray  # global index of the point labelled 0, -1 if none


def padded_desc(batch: WindowBatch) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(Y, W, global index) as (n, K) matrices in decreasing W; padding has Y=0, index -1."""
    n = len(batch)
    k = int(batch.count.max()) if n else 0
    seg = batch.seg
    end = batch.start + batch.count
    rank = end[seg] - 1 - np.arange(len(batch.y))  # 0 for the largest W
    Y = np.zeros((n, k))
    W = np.zeros((n, k))
    G = np.full((n, k), -1, dtype=np.int64)
    Y[seg, rank] = batch.y
    W[seg, rank] = batch.w
    G[seg, rank] = np.arange(len(batch.y))
    return Y, W, G


def index_crossing_batch(batch: WindowBatch, log_x: float) -> CrossingBatch:
    """Vectorised `index_crossing`; sums run in the same order as the scalar scan."""
    n = len(batch)
    Y, _, G = padded_desc(batch)
    if Y.shape[1] == 0:
        nan = np.full(n, np.nan)
        return CrossingBatch(np.zeros(n, bool), nan, nan.copy(), np.full(n, -1, dtype=np.int64))
    full = np.concatenate((batch.lump[:, None], Y), axis=1).cumsum(axis=1)
    exceed = (full[:, 1:] > log_x) & (G >= 0)
    has = exceed.any(axis=1) & (batch.lump <= log_x)
    col = exceed.argmax(axis=1)
    rows = np.arange(n)
    s0 = np.where(has, full[rows, col + 1], np.nan)
    s1 = np.where(has, full[rows, col], np.nan)
    zero = np.where(has, G[rows, col] if G.size else -1, -1)
    return CrossingBatch(has, s1, s0, zero)


def theta_infinity_batch(batch: WindowBatch, ladder: PrimeLadder) -> np.ndarray:
    """sum r(Y) over window points (r := 0 above the ladder) plus the lump."""
    r = np.where(batch.y <= ladder.t_max, r_many(ladder, np.minimum(batch.y, ladder.t_max)), 0.0)
    out = np.zeros(len(batch))
    np.add.at(out, batch.seg, r)
    return out + batch.lump


def tail_mass_above(batch: WindowBatch, t: float) -> np.ndarray:
    """I_t: total Y of points with W > t, lump included."""
    keep = batch.w > t
    out = np.zeros(len(batch))
    np.add.at(out, batch.seg[keep], batch.y[keep])
    return out + batch.lump


# --------------------------------------------------------------------------
# analytic oracles

_GL10 = np.polynomial.legendre.leggauss(10)
_GL5 = np.polynomial.legendre.leggauss(5)


def _gl(f, a: np.ndarray, b: np.ndarray, rule) -> np.ndarray:
    nodes, weights = rule
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    pts = mid[:, None] + half[:, None] * nodes[None, :]
    return half * (f(pts) @ weights)


def _rung_pieces(ladder: PrimeLadder) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(a, b, c) pieces on which r(y) = |c - y| is smooth, up to the ladder top."""
    lo = ladder.lam[:-1]
    hi = ladder.lam[1:]
    c = ladder.log_q
    inside = (c > lo) & (c < hi)
    a = np.concatenate(([0.0], lo, c[inside]))
    b = np.concatenate(([ladder.lam[0]], np.where(inside, c, hi), hi[inside]))
    cc = np.concatenate(([0.0], c, c[inside]))
    return a, b, cc


def integrate_over_rungs(ladder: PrimeLadder, g, chunk: int = 200_000) -> Estimate:
    """Integral of g(y, r(y)) over (0, ladder top] with a GL10-vs-GL5 error."""
    a, b, c = _rung_pieces(ladder)
    total = 0.0
    err = 0.0
    for i in range(0, len(a), chunk):
        ai, bi, ci = a[i:i + chunk], b[i:i + chunk], c[i:i + chunk]

        def f(y, ci=ci):
            return g(y, np.abs(ci[:, None] - y))

        hi_ = _gl(f, ai, bi, _GL10)
        lo_ = _gl(f, ai, bi, _GL5)
        total += math.fsum(hi_)
        err += float(np.abs(hi_ - lo_).sum())
    return Estimate(total, err + 1e-15 * abs(total))


@dataclass(frozen=True)
class MgfResult:
    value: float
    error: float
    quad_error: float
    tail_bound: float
    t_cover: float


def theta_mgf_numeric(alpha: float, ladder: PrimeLadder, w_min: float = 0.0) -> MgfResult:
    """E[exp(alpha * Theta_inf)] = exp(int_0^inf (e^{alpha r(y)} - 1)/y dy).

    The integral is taken piecewise over the ladder; the part above the
    ladder top T is bounded by c*alpha*e^{alpha r0}/(2 T^2) with c the
    measured decay constant of r on [T/2, T].  With w_min > 0 the integrand
    carries the factor e^{-w_min y}, which is the exact law of the process
    restricted to W >= w_min.
    """
    if alpha < 0:
        raise ValueError("alpha must be >= 0 (the integral diverges otherwise)")
    if alpha == 0:
        return MgfResult(1.0, 0.0, 0.0, 0.0, ladder.t_max)

    def g(y, r):
        return np.expm1(alpha * r) * np.exp(-w_min * y) / y

    est = integrate_over_rungs(ladder, g)
    T = ladder.t_max
    c = r_decay_constant(ladder, T / 2)
    tail = c * alpha * math.exp(alpha * r_sup(ladder)) / (2 * T * T)
    value = math.exp(est.value)
    # d exp(I) = exp(I) dI; the tail only increases I
    return MgfResult(value, value * (math.expm1(est.error + tail)), value * est.error, value * math.expm1(tail), T)


CAMPBELL_FUNCS = ("zero", "y", "min1", "r")


def campbell_integral(f: str, w_min: float, w_max: float, ladder: PrimeLadder | None = None) -> Estimate:
    """Closed form / quadrature of the mean of sum f(Y) over a window."""
    a, b = w_min, w_max
    if f == "zero":
        return Estimate(0.0, 0.0)
    if f == "y":
        return Estimate(1.0 / a - 1.0 / b, 0.0)
    if f == "min1":
        v = -math.expm1(-a) / a + math.expm1(-b) / b + special.exp1(a) - special.exp1(b)
        return Estimate(float(v), 1e-14)
    if f == "r":
        if ladder is None:
            raise ValueError("f='r' needs a ladder")

        def g(y, r):
            return r * (np.exp(-a * y) - np.exp(-b * y)) / y

        return integrate_over_rungs(ladder, g)
    raise ValueError(f"unknown function tag {f!r}; choose from {CAMPBELL_FUNCS}")


def campbell_check(
    f: str, w_min: float, w_max: float, n_windows: int, stream: np.random.Generator,
    ladder: PrimeLadder | None = None, block: int = 100_000,
):
    """Monte Carlo mean of sum_{W in window} f(Y) against its integral.

    Returns (mc report, integral estimate).  For f='r' the value of r above
    the ladder top is taken as 0 on both sides.
    """
    integral = campbell_integral(f, w_min, w_max, ladder)
    acc = MomentAccumulator()
    done = 0
    while done < n_windows:
        m = min(block, n_windows - done)
        batch = sample_r_window_batch(stream, m, w_min, w_max)
        y = batch.y
        if f == "zero":
            vals = np.zeros_like(y)
        elif f == "y":
            vals = y
        elif f == "min1":
            vals = np.minimum(y, 1.0)
        else:
            vals = np.where(y <= ladder.t_max, r_many(ladder, np.minimum(y, ladder.t_max)), 0.0)
        per = np.zeros(m)
        np.add.at(per, batch.seg, vals)
        acc.add(per)
        done += m
    return acc.report("campbell-mc"), integral
