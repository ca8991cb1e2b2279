"""Experiment drivers.  Each driver is a pure function of an ExperimentConfig
returning an ExperimentResult; `write_result` turns it into a CSV plus a JSON
sidecar.  Work is split into fixed-size blocks with one derived stream per
block, so results do not depend on the worker count."""
from __future__ import annotations

import csv
import json
import math
import os
import subprocess
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np

from . import coupling as C
from . import dirichlet_stats as D
from . import kfact as K
from . import pd_process as P
from . import primes as pr
from .rng import derive_stream
from .stats import MomentAccumulator, StatReport, no_monotone_increase, wilson

EXPERIMENTS = (
    "coupling-l1", "mu-dist", "jstar-check", "j-vs-jstar",
    "dirichlet-law", "dt-marginals", "rho-constant", "theta-moments",
)
OUT_ENV = "PDCOUPLE_OUT"
BLOCK = 1 << 15


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int
    x: list = field(default_factory=lambda: [100, 1000])
    samples: int = 100_000
    mu_samples: Optional[int] = None
    workers: int = 1
    out: Optional[str] = None
    k: int = 2
    family: str = "uniform"
    alpha: Optional[list] = None
    grid: Optional[list] = None
    j: list = field(default_factory=lambda: [1, 2, 5, 10])
    mgf_alpha: float = 1.0
    eps: float = P.DEFAULT_EPS
    w_max: float = P.DEFAULT_W_MAX
    factor_samples: int = 0
    mc_budget: int = 1_000_000

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
        if self.seed is None or self.seed < 0:
            raise ValueError("a non-negative --seed is required")
        self.x = [int(v) if float(v).is_integer() else float(v) for v in self.x]
        if any(b <= a for a, b in zip(self.x, self.x[1:])):
            raise ValueError("--x grid must be strictly ascending")
        for name in ("samples", "workers", "mc_budget"):
            if getattr(self, name) < 1:
                raise ValueError(f"--{name.replace('_', '-')} must be >= 1")
        if self.mu_samples is not None and self.mu_samples < 1:
            raise ValueError("--mu-samples must be >= 1")

    def mu_budget(self, x: int) -> int:
        return self.mu_samples or max(10**6, 100 * int(x))

    def factor_spec(self) -> K.FactorSpec:
        alpha = tuple(Fraction(str(a)) for a in self.alpha) if self.alpha else ()
        return K.FactorSpec(self.k, self.family, alpha)

    def u_grid(self) -> list[tuple]:
        """Grid points as (k-1)-tuples; the 1-D grid is used on every axis."""
        g = self.grid or [round(0.1 * i, 10) for i in range(1, 10)]
        axes = [list(g)] * (self.k - 1)
        out = [()]
        for ax in axes:
            out = [t + (v,) for t in out for v in ax]
        return out


@dataclass
class ExperimentResult:
    name: str
    header: list
    rows: list
    summary: dict = field(default_factory=dict)
    hard_checks: dict = field(default_factory=dict)

    @property
    def hard_ok(self) -> bool:
        return all(self.hard_checks.values())


def _map(fn: Callable, args: list, workers: int) -> list:
    if workers <= 1 or len(args) <= 1:
        return [fn(*a) for a in args]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, *zip(*args)))


def _blocks(n: int, size: int = BLOCK) -> list[int]:
    return [min(size, n - s) for s in range(0, n, size)]


# --------------------------------------------------------------------------
# mu-hat and dtv


def mu_group_counts(x: int, n: int, seed: int, groups: int, table, ladder, workers: int = 1) -> np.ndarray:
    """J-histograms (plus overflow slot) for `groups` interleaved block groups."""
    sizes = _blocks(n, C.MU_BLOCK)
    args = [(x, m, seed, b, table, ladder, "conditional") for b, m in enumerate(sizes)]
    parts = _map(C._mu_counts_block, args, workers)
    out = np.zeros((groups, x + 2))
    for b, part in enumerate(parts):
        out[b % groups] += part
    return out


def _dist_from_counts(x: int, j_counts: np.ndarray, n: int, table) -> C.EmpiricalDist:
    spread = C._spread_conditional(x, j_counts, table)
    mass = spread[: x + 1] / n
    mass[0] = 0.0
    over = float(spread[x + 1] / n)
    scale = 1.0 / (mass.sum() + over)
    return C.EmpiricalDist(x, mass * scale, over * scale, n)


@dataclass
class MuEstimate:
    dist: C.EmpiricalDist
    dtv: float
    dtv_se: float
    dtv_jackknife: float


def estimate_mu_with_error(x: int, n: int, seed: int, table, ladder, groups: int = 10, workers: int = 1) -> MuEstimate:
    """Conditional mu-hat, its dtv to uniform and a delete-one-group jackknife.

    The jackknife estimate removes the leading 1/n plug-in bias of dtv.
    """
    counts = mu_group_counts(x, n, seed, groups, table, ladder, workers)
    sizes = np.zeros(groups)
    for b, m in enumerate(_blocks(n, C.MU_BLOCK)):
        sizes[b % groups] += m
    uni = C.uniform_for(x)
    total = counts.sum(axis=0)
    full = _dist_from_counts(x, total, n, table)
    d = C.tv_distance(full, uni)
    used = [g for g in range(groups) if sizes[g] > 0]
    if len(used) < 2:
        return MuEstimate(full, d, math.nan, d)
    loo = np.array([C.tv_distance(_dist_from_counts(x, total - counts[g], int(n - sizes[g]), table), uni) for g in used])
    G = len(used)
    se = math.sqrt((G - 1) / G * float(np.sum((loo - loo.mean()) ** 2)))
    return MuEstimate(full, d, se, G * d - (G - 1) * float(loo.mean()))


def run_mu_dist(cfg: ExperimentConfig, out_dir: Path | None = None) -> ExperimentResult:
    table = pr.build_prime_table(max(max(cfg.x), 16))
    rows = []
    for x in cfg.x:
        ladder = pr.ladder_for(math.log(x) + 2)
        n = cfg.mu_budget(x)
        est = estimate_mu_with_error(x, n, cfg.seed, table, ladder, workers=cfg.workers)
        if out_dir is not None:
            C.write_mu_cache(out_dir / f"mu_{x}.csv", est.dist, cfg.seed)
        L = math.log(x)
        rows.append([x, est.dtv, est.dtv_se, n, est.dtv * L, est.dtv_se * L, est.dtv_jackknife * L])
    scaled = [r[4] for r in rows]
    ses = [r[5] for r in rows]
    return ExperimentResult(
        "mu-dist",
        ["x", "dtv_uniform", "stderr", "n_samples", "dtv_log_x", "dtv_log_x_stderr", "dtv_log_x_jackknife"],
        rows,
        summary={"no_monotone_increase": no_monotone_increase(scaled, ses)},
    )


# --------------------------------------------------------------------------
# coupling-l1


def _coupled_block(x, m, seed, b, plan, table, ladder, profiles):
    stream = derive_stream(seed, "coupled", x, b)
    cb = C.sample_coupled_batch(stream, m, x, plan, table, ladder, profiles)
    ind = C.independent_l1_batch(derive_stream(seed, "independent", x, b), m, x, profiles)
    eq = cb.m_equals_n
    return {
        "l1": MomentAccumulator().add(cb.l1),
        "l1_eq": MomentAccumulator().add(cb.l1[eq]),
        "exp_l1_eq": MomentAccumulator().add(np.exp(0.2 * cb.l1[eq])),
        "log_x_over_n": MomentAccumulator().add(np.log(x / cb.N)),
        "independent": MomentAccumulator().add(ind),
        "mismatch": int(np.count_nonzero(~eq)),
        "l1_bound_fail": int(np.count_nonzero(~cb.l1_bound_ok())),
        "out_of_range": int(np.count_nonzero((cb.N < 1) | (cb.N > x))),
    }


def _merge(parts: list[dict]) -> dict:
    out = dict(parts[0])
    for p in parts[1:]:
        for k, v in p.items():
            out[k] = out[k].merge(v) if isinstance(v, MomentAccumulator) else out[k] + v
    return out


@dataclass
class CouplingStats:
    x: int
    n: int
    l1: StatReport
    l1_eq: StatReport
    exp_l1_eq: StatReport
    log_x_over_n: StatReport
    independent: StatReport
    mismatch: int
    l1_bound_fail: int
    out_of_range: int
    dtv: float


def coupling_stats(x: int, n: int, seed: int, mu_samples: int, workers: int = 1, table=None) -> CouplingStats:
    table = table or pr.build_prime_table(max(x, 16))
    ladder = pr.ladder_for(math.log(x) + 2)
    profiles = pr.profile_arrays(table, x)
    mu = C.estimate_mu(x, mu_samples, seed, "conditional", table, ladder)
    plan = C.TransportPlan.between(mu, C.uniform_for(x))
    args = [(x, m, seed, b, plan, table, ladder, profiles) for b, m in enumerate(_blocks(n))]
    agg = _merge(_map(_coupled_block, args, workers))
    return CouplingStats(
        x, n, agg["l1"].report(), agg["l1_eq"].report(), agg["exp_l1_eq"].report(),
        agg["log_x_over_n"].report(), agg["independent"].report(),
        agg["mismatch"], agg["l1_bound_fail"], agg["out_of_range"], float(plan.dtv),
    )


@dataclass
class FactorCheck:
    n: int
    delta_bound_fail: int
    rho_bound_fail: int
    event_ok: int
    l1_bound_fail: int
    m_equals_n: int


def coupled_factorization_check(x: int, n: int, seed: int, spec: K.FactorSpec, mu_samples: int,
                                table=None) -> FactorCheck:
    """Scalar coupled samples with a coloured factorization each."""
    table = table or pr.build_prime_table(max(x, 16))
    ladder = pr.ladder_for(math.log(x) + 2)
    mu = C.estimate_mu(x, mu_samples, seed, "conditional", table, ladder)
    stream = derive_stream(seed, "kfact-coupled", x)
    bad_delta = bad_rho = ev = l31 = eq = 0
    for _ in range(n):
        cs = C.sample_coupled(stream, x, mu, table, ladder)
        ck = K.coupled_kfact(stream, cs, spec)
        a, b = K.transition_checks(ck, x, cs.prof_N.s)
        bad_delta += not a
        bad_rho += not b
        ev += ck.event_ok
        if cs.m_equals_n:
            eq += 1
            l31 += not C.l1_bound_check(cs)
    return FactorCheck(n, bad_delta, bad_rho, ev, l31, eq)


def run_coupling_l1(cfg: ExperimentConfig, out_dir: Path | None = None) -> ExperimentResult:
    table = pr.build_prime_table(max(max(cfg.x), 16))
    rows, summary = [], {}
    fails = 0
    for x in cfg.x:
        st = coupling_stats(x, cfg.samples, cfg.seed, cfg.mu_budget(x), cfg.workers, table)
        rows.append([x, st.l1.estimate, st.l1.stderr, st.mismatch / st.n])
        summary[str(x)] = {
            "mean_l1_given_m_eq_n": st.l1_eq.estimate,
            "mean_exp_0.2_l1_given_m_eq_n": [st.exp_l1_eq.estimate, st.exp_l1_eq.stderr],
            "mean_log_x_over_n": [st.log_x_over_n.estimate, st.log_x_over_n.stderr],
            "mean_l1_independent": [st.independent.estimate, st.independent.stderr],
            "dtv_mu_hat_uniform": st.dtv,
            "l1_bound_failures": st.l1_bound_fail,
        }
        fails += st.l1_bound_fail + st.out_of_range
    checks = {"l1_bound": fails == 0}
    if cfg.factor_samples:
        x = cfg.x[-1]
        fc = coupled_factorization_check(x, cfg.factor_samples, cfg.seed, cfg.factor_spec(), cfg.mu_budget(x), table)
        summary["factorization"] = asdict(fc)
        checks["transition_bounds"] = fc.delta_bound_fail == 0 and fc.rho_bound_fail == 0
        checks["l1_bound_scalar"] = fc.l1_bound_fail == 0
    return ExperimentResult("coupling-l1", ["x", "mean_l1", "stderr", "frac_mismatch"], rows, summary, checks)


# --------------------------------------------------------------------------
# J and J*


def jstar_check_rows(xs, js, n: int, seed: int, eps: float, w_max: float) -> list[list]:
    rows = []
    for x in xs:
        table = pr.build_prime_table(max(int(x), 16))
        _, Js, _ = C.simulate_j_pairs(x, n, seed, eps, w_max, label="jstar")
        for j in js:
            if j > x:
                continue
            hits = int(np.count_nonzero(Js == j))
            p = hits / n
            se = math.sqrt(max(p * (1 - p), 1.0 / n) / n)
            num = C.jstar_pmf_numeric(j, x, table)
            rows.append([x, j, p, se, num.value, num.error, (p - num.value) / se, num.value * j * math.log(x)])
    return rows


def run_jstar_check(cfg: ExperimentConfig, out_dir: Path | None = None) -> ExperimentResult:
    rows = jstar_check_rows(cfg.x, cfg.j, cfg.samples, cfg.seed, cfg.eps, cfg.w_max)
    return ExperimentResult(
        "jstar-check", ["x", "j", "mc", "stderr", "numeric", "numeric_err", "z", "numeric_j_log_x"], rows,
        summary={"max_abs_z": max(abs(r[6]) for r in rows) if rows else 0.0},
    )


def run_j_vs_jstar(cfg: ExperimentConfig, out_dir: Path | None = None) -> ExperimentResult:
    rows = []
    for x in cfg.x:
        J, Js, retries = C.simulate_j_pairs(x, cfg.samples, cfg.seed, cfg.eps, cfg.w_max)
        rep = wilson(int(np.count_nonzero(J != Js)), cfg.samples)
        L = math.log(x)
        rows.append([x, rep.estimate, rep.stderr, cfg.samples, rep.estimate * L, rep.stderr * L, retries])
    return ExperimentResult(
        "j-vs-jstar", ["x", "rate", "stderr", "n", "rate_log_x", "rate_log_x_stderr", "window_retries"], rows,
        summary={"no_monotone_increase": no_monotone_increase([r[4] for r in rows], [r[5] for r in rows])},
    )


# --------------------------------------------------------------------------
# Dirichlet law


def error_shape(u: tuple, alpha: tuple, log_x: float) -> float:
    """sum over u_i != 1 of 1 / ((1 + u_i L)^{1-a_i} (1 + (1-u_i) L)^{a_i})."""
    return math.fsum(
        1.0 / ((1 + ui * log_x) ** (1 - ai) * (1 + (1 - ui) * log_x) ** ai)
        for ui, ai in zip((float(v) for v in u), (float(a) for a in alpha)) if ui != 1
    )


def dirichlet_law_rows(spec: K.FactorSpec, x, us: list[tuple], seed: int, mc_budget: int, table=None) -> list[list]:
    exact = K.exact_joint_law_grid(spec, x, us, table)
    params = D.DirichletParams(tuple(float(a) for a in spec.alpha))
    L = math.log(x)
    rows = []
    asyms = D.dirichlet_cdf_grid(params, us, mc_budget, derive_stream(seed, "dirichlet-cdf", x))
    for u, e, asym in zip(us, exact, asyms):
        err = float(e) - asym.estimate
        shape = error_shape(u, spec.alpha, L)
        rows.append([x, spec.k, spec.family, *[float(v) for v in u], float(e), asym.estimate, asym.stderr,
                     err, err / shape if shape else math.nan])
    return rows


def run_dirichlet_law(cfg: ExperimentConfig, out_dir: Path | None = None) -> ExperimentResult:
    spec = cfg.factor_spec()
    us = cfg.u_grid()
    table = pr.build_prime_table(max(int(max(cfg.x)), 16))
    rows = []
    for x in cfg.x:
        rows += dirichlet_law_rows(spec, x, us, cfg.seed, cfg.mc_budget, table)
    header = ["x", "k", "family", *[f"u_{i}" for i in range(1, spec.k)],
              "exact_prob", "asymptotic", "asymptotic_stderr", "error", "error_ratio"]
    ratios = {}
    for r in rows:
        ratios[str(r[0])] = max(ratios.get(str(r[0]), 0.0), abs(r[-1]))
    return ExperimentResult("dirichlet-law", header, rows, summary={"max_abs_error_ratio": ratios})


# --------------------------------------------------------------------------
# Donnelly-Tavare marginals


def dt_first_component(alpha, n: int, seed: int, log_x: float = math.log(1e6)) -> np.ndarray:
    """Z_1 from colouring Poisson-Dirichlet sticks, undrawn mass split by Dir(alpha)."""
    out = []
    for b, m in enumerate(_blocks(n)):
        s = derive_stream(seed, "dt", b)
        g = P.sample_gem_batch(s, m, log_x)
        out.append(D.dt_partition_exact(s, g.sticks, g.remainder, alpha)[:, 0])
    return np.concatenate(out)


def run_dt_marginals(cfg: ExperimentConfig, out_dir: Path | None = None) -> ExperimentResult:
    alphas = [cfg.alpha] if cfg.alpha else [[0.5, 0.5], [0.2, 0.8]]
    rows = []
    for alpha in alphas:
        a = [float(v) for v in alpha]
        z = dt_first_component(a, cfg.samples, cfg.seed)
        b = 1.0 - a[0]
        cdf = np.vectorize(lambda t: D.beta_cdf(a[0], b, float(min(max(t, 0.0), 1.0))))
        d = D.ks_stat(z, cdf)
        rows.append([":".join(map(str, a)), d, D.ks_pvalue(d, len(z)), len(z), float(z.mean()),
                     float(z.std(ddof=1) / math.sqrt(len(z))), a[0]])
    return ExperimentResult("dt-marginals", ["alpha", "ks_stat", "p_value", "n", "mean_z1", "stderr", "beta_mean"], rows)


# --------------------------------------------------------------------------
# rho constant


@dataclass
class RhoConstant:
    x: int
    c_fit: float
    b_fit: float
    c_ratio: float
    fit_xs: list
    sums: list
    psi: StatReport
    psi_width: float


def rho_constant(x: int, n: int, seed: int, fit_points: int = 12) -> RhoConstant:
    lr = K.log_rho_sieve(x)
    lo_x = max(100, x // 100)
    xs = sorted({int(round(v)) for v in np.geomspace(lo_x, x, fit_points)})
    c, b, S = K.rho_constant_exact(lr, xs)
    acc = MomentAccumulator()
    width = 0.0
    for blk, m in enumerate(_blocks(n)):
        g = P.sample_gem_batch(derive_stream(seed, "psi", blk), m, math.log(1e6))
        lo, hi = K.rho_psi_batch(g.sorted_desc(), g.remainder)
        acc.add(0.5 * (lo + hi))
        width = max(width, float((hi - lo).max()))
    return RhoConstant(x, c, b, float(S[-1] / (x * math.log(x))), xs, [float(s) for s in S],
                       acc.report("psi-mc"), width)


def run_rho_constant(cfg: ExperimentConfig, out_dir: Path | None = None) -> ExperimentResult:
    x = int(cfg.x[-1])
    rc = rho_constant(x, cfg.samples, cfg.seed)
    rows = [[xi, s, s / (xi * math.log(xi))] for xi, s in zip(rc.fit_xs, rc.sums)]
    return ExperimentResult(
        "rho-constant", ["x", "sum_log_rho", "c_estimate"], rows,
        summary={"c_fit": rc.c_fit, "b_fit": rc.b_fit, "c_psi_mc": [rc.psi.estimate, rc.psi.stderr],
                 "psi_interval_width": rc.psi_width},
    )


# --------------------------------------------------------------------------
# Theta moments


def theta_inf_mgf_mc(alpha: float, n: int, seed: int, w_min: float, w_max: float, ladder) -> StatReport:
    acc = MomentAccumulator()
    for b, m in enumerate(_blocks(n)):
        wb = P.sample_r_window_batch(derive_stream(seed, "theta-inf", b), m, w_min, w_max)
        acc.add(np.exp(alpha * P.theta_infinity_batch(wb, ladder)))
    return acc.report("theta-inf-mc")


def theta_x_mgf_mc(alpha: float, x, n: int, seed: int) -> StatReport:
    log_x = math.log(x)
    ladder = pr.ladder_for(log_x + 2)
    acc = MomentAccumulator()
    for b, m in enumerate(_blocks(n)):
        g = P.sample_gem_batch(derive_stream(seed, "theta-x", x, b), m, log_x)
        acc.add(np.exp(alpha * P.theta_batch(ladder, g, log_x)))
    return acc.report("theta-x-mc")


THETA_W_MIN = 1e-4
THETA_T_COVER = 17.0


def run_theta_moments(cfg: ExperimentConfig, out_dir: Path | None = None) -> ExperimentResult:
    ladder = pr.ladder_for(THETA_T_COVER)
    a = cfg.mgf_alpha
    mc = theta_inf_mgf_mc(a, cfg.samples, cfg.seed, THETA_W_MIN, cfg.w_max, ladder)
    win = P.theta_mgf_numeric(a, ladder, w_min=THETA_W_MIN)
    full = P.theta_mgf_numeric(a, ladder)
    rows = [["inf", f"E[exp({a}*Theta)]", mc.estimate, mc.stderr, mc.n, win.value, win.quad_error]]
    xs_est, xs_se = [], []
    for x in cfg.x:
        r = theta_x_mgf_mc(a, x, cfg.samples, cfg.seed)
        rows.append([x, f"E[exp({a}*Theta)]", r.estimate, r.stderr, r.n, "", ""])
        xs_est.append(r.estimate)
        xs_se.append(r.stderr)
    return ExperimentResult(
        "theta-moments", ["x", "stat", "estimate", "stderr", "n", "oracle", "oracle_err"], rows,
        summary={"oracle_unwindowed": [full.value, full.error], "oracle_tail_bound": full.tail_bound,
                 "t_cover": full.t_cover, "w_min": THETA_W_MIN,
                 "theta_x_no_monotone_increase": no_monotone_increase(xs_est, xs_se)},
    )


RUNNERS = {
    "coupling-l1": run_coupling_l1,
    "mu-dist": run_mu_dist,
    "jstar-check": run_jstar_check,
    "j-vs-jstar": run_j_vs_jstar,
    "dirichlet-law": run_dirichlet_law,
    "dt-marginals": run_dt_marginals,
    "rho-constant": run_rho_constant,
    "theta-moments": run_theta_moments,
}


# --------------------------------------------------------------------------
# output


def version_string() -> str:
    try:
        r = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], capture_output=True,
                           text=True, cwd=Path(__file__).resolve().parent, timeout=10)
        if r.returncode == 0 and r.stdout.strip():
            return r.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    from . import __version__
    return __version__


def output_dir(cfg: ExperimentConfig) -> Path:
    return Path(cfg.out or os.environ.get(OUT_ENV) or "results")


def _cell(v: Any) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(w) for k, w in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(w) for w in v]
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if math.isfinite(f) else str(f)
    if isinstance(v, (np.integer, np.bool_)):
        return v.item()
    return v


def write_result(cfg: ExperimentConfig, res: ExperimentResult, out_dir: Path) -> tuple[Path, Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{res.name}.csv"
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(res.header)
        for r in res.rows:
            w.writerow([_cell(v) for v in r])
    cfg_echo = asdict(cfg)
    # where and how wide the run was does not change the numbers
    cfg_echo.pop("out", None)
    cfg_echo.pop("workers", None)
    side = {"config": cfg_echo, "version": version_string(), "summary": res.summary,
            "hard_checks": res.hard_checks, "hard_ok": res.hard_ok}
    json_path = csv_path.with_suffix(".json")
    json_path.write_text(json.dumps(_jsonable(side), indent=2, sort_keys=True) + "\n")
    return csv_path, json_path


def run(cfg: ExperimentConfig) -> ExperimentResult:
    out = output_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    res = RUNNERS[cfg.experiment](cfg, out)
    write_result(cfg, res, out)
    return res
