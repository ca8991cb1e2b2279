import math
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import exact_output_law
from pdcouple import coupling as cp
from pdcouple import pd_process as pd
from pdcouple import primes as pr
from pdcouple.rng import derive_stream
from pdcouple.stats import chi2_pvalue, chi2_stat

X = 100


@pytest.fixture(scope="module")
def table():
    return pr.build_prime_table(10**4)


@pytest.fixture(scope="module")
def ladder():
    return pr.ladder_for(math.log(10**4) + 2)


@pytest.fixture(scope="module")
def mu_100(table, ladder):
    return cp.estimate_mu(X, 10**6, 11, "conditional", table, ladder)


def is_prime_power(q):
    if q < 2:
        return False
    p = next(d for d in range(2, q + 1) if q % d == 0)
    while q % p == 0:
        q //= p
    return q == 1


# ---- M ----------------------------------------------------------------------

def test_build_m_example(table, ladder):
    gem = pd.GemSample(np.array([0.6, 0.3, 0.1]), 0.0, 3)
    s = cp.build_m(gem, 0.3, math.e**2, table, ladder)
    assert s.Q == (3, 2, 1) and s.J == 2
    assert pr.theta(table, math.e**2 / 2) == pytest.approx(math.log(6))
    assert s.p_extra == 2 and s.M == 4


def test_sample_m_invariants(table, ladder):
    s = derive_stream(1, "m")
    x = 10**4
    for _ in range(2000):
        c = cp.sample_m(s, x, table, ladder)
        assert all(q == 1 or is_prime_power(q) for q in c.Q)
        assert c.J == math.prod(c.Q[1:])
        hs = pr.h_many(ladder, c.gem.sticks * math.log(x), beyond="identity")
        assert c.J == round(math.exp(math.fsum(hs[1:][c.gem.sticks[1:] * math.log(x) > pr.LAMBDA_0])))
        assert c.M == c.J * c.p_extra
        assert (c.p_extra == 1) == (pr.theta(table, x / c.J) == 0 if c.J <= x else True)
        if c.J > x / 2:
            assert c.p_extra == 1 and c.M == c.J


def test_sample_m_errors(table, ladder):
    with pytest.raises(ValueError):
        cp.sample_m(derive_stream(1, "e"), 1, table, ladder)
    with pytest.raises(pr.CapacityError):
        cp.sample_m(derive_stream(1, "e"), 10**5, table, ladder)


@given(st.lists(st.lists(st.integers(1, 50), min_size=3, max_size=3), min_size=1, max_size=20),
       st.integers(1, 10**6))
def test_capped_product(rows, cap):
    f = np.array(rows, dtype=np.int64)
    got = cp.capped_product(f, cap)
    assert list(got) == [min(math.prod(r), cap) for r in rows]


def test_extra_prime_conditional_law(table, ladder):
    mb = cp.sample_m_batch(derive_stream(2, "cond"), 400_000, X, table, ladder)
    for j in (1, 2, 3):
        p = mb.p_extra[mb.J == j]
        primes = table.primes[table.primes <= X // j]
        counts = np.array([np.count_nonzero(p == q) for q in primes])
        expected = p.size * np.log(primes) / pr.theta(table, X / j)
        assert counts.sum() == p.size
        assert chi2_pvalue(chi2_stat(counts, expected), len(primes) - 1) > 1e-4


def test_batch_m_law_matches_scalar(table, ladder):
    mb = cp.sample_m_batch(derive_stream(3, "b"), 100_000, X, table, ladder)
    s = derive_stream(3, "s")
    scalar = np.array([cp.sample_m(s, X, table, ladder).M for _ in range(20_000)])
    for m in (1, 2, 6, 97):
        a, b = np.mean(mb.M == m), np.mean(scalar == m)
        se = math.sqrt(a * (1 - a) / 100_000 + b * (1 - b) / 20_000)
        assert abs(a - b) < 4 * se + 1e-6


# ---- empirical laws --------------------------------------------------------

def test_empirical_dist_validation():
    with pytest.raises(ValueError):
        cp.EmpiricalDist(2, np.array([0, 0.5, 0.4]), 0.0, 1)
    with pytest.raises(ValueError):
        cp.EmpiricalDist(2, np.array([0, 1.5, -0.5]), 0.0, 1)
    d = cp.dist_from_masses([Fraction(1, 2), Fraction(1, 4)], Fraction(1, 4))
    assert d(7) == Fraction(1, 4) and d(2) == Fraction(1, 4)


def test_estimate_mu_single_sample(table, ladder):
    d = cp.estimate_mu(X, 1, 5, table=table, ladder=ladder)
    atoms = np.array(d.atoms())
    assert np.count_nonzero(atoms) == 1 and atoms.max() == 1.0


def test_estimate_mu_methods_agree(table, ladder, mu_100):
    freq = cp.estimate_mu(X, 10**6, 12, "frequency", table, ladder)
    assert sum(mu_100.atoms()) == pytest.approx(1.0, abs=1e-12)
    assert cp.tv_distance(freq, mu_100) < 0.01
    # M = 1 needs J = 1 and no prime below x, impossible for x >= 2
    assert mu_100(1) == 0.0
    with pytest.raises(ValueError):
        cp.estimate_mu(X, 0, 1)
    with pytest.raises(ValueError):
        cp.estimate_mu(X, 10, 1, method="bootstrap")


def test_estimate_mu_worker_invariance(table, ladder):
    n = 3 * cp.MU_BLOCK + 17
    serial = cp.estimate_mu(X, n, 4, table=table, ladder=ladder)
    again = cp.estimate_mu(X, n, 4, table=table, ladder=ladder)
    with ProcessPoolExecutor(2) as ex:
        pooled = cp.estimate_mu(X, n, 4, table=table, ladder=ladder, executor=ex)
    assert np.array_equal(serial.mass, again.mass)
    assert np.array_equal(serial.mass, pooled.mass) and serial.overflow == pooled.overflow


def test_mu_cache_roundtrip(tmp_path, table, ladder):
    d = cp.estimate_mu(X, 5000, 3, table=table, ladder=ladder)
    p = tmp_path / "mu.csv"
    cp.write_mu_cache(p, d, 3)
    assert p.read_text().splitlines()[:3] == ["x,n_samples,seed", "100,5000,3", "value,count"]
    back, seed = cp.read_mu_cache(p)
    assert seed == 3 and np.allclose(back.mass, d.mass, atol=1e-15) and back.overflow == d.overflow
    p.write_text("nope\n")
    with pytest.raises(ValueError):
        cp.read_mu_cache(p)


def test_tv_distance_examples():
    F = Fraction
    mu = cp.dist_from_masses([F(3, 5), F(2, 5)])
    nu = cp.dist_from_masses([F(2, 5), F(3, 5)])
    assert cp.tv_distance(mu, nu) == F(1, 5)
    assert cp.tv_distance(mu, mu) == 0
    a = cp.dist_from_masses([F(1), F(0)])
    b = cp.dist_from_masses([F(0), F(1)])
    assert cp.tv_distance(a, b) == 1
    assert cp.tv_distance(cp.uniform_dist(4), cp.uniform_dist(4)) == 0.0
    with pytest.raises(ValueError):
        cp.tv_distance(cp.uniform_dist(4), cp.uniform_dist(5))


# ---- transport -------------------------------------------------------------

def test_transport_identity_and_point_masses():
    F = Fraction
    mu = cp.dist_from_masses([F(1, 3), F(2, 3)])
    for m in (1, 2):
        assert cp.tv_transport(m, F(1, 2), F(1, 2), mu, mu) == m
    d1 = cp.dist_from_masses([F(1), F(0)])
    d2 = cp.dist_from_masses([F(0), F(1)])
    assert cp.tv_transport(1, F(1, 7), F(5, 7), d1, d2) == 2


def test_transport_two_point_exact():
    F = Fraction
    law, moved, dtv = exact_output_law([F(3, 5), F(2, 5)], [F(2, 5), F(3, 5)])
    assert law == [F(2, 5), F(3, 5)] and moved == F(1, 5) == dtv


@given(st.lists(st.integers(0, 6), min_size=4, max_size=4), st.lists(st.integers(0, 6), min_size=4, max_size=4))
def test_transport_exact_random(wa, wb):
    if sum(wa) == 0 or sum(wb) == 0:
        return
    mu = [Fraction(v, sum(wa)) for v in wa]
    nu = [Fraction(v, sum(wb)) for v in wb]
    law, moved, dtv = exact_output_law(mu, nu)
    assert law == nu and moved == dtv


def test_transport_vectorised_matches_scalar():
    s = derive_stream(5, "tp")
    mu = s.dirichlet(np.ones(30))
    nu = s.dirichlet(np.ones(30))
    plan = cp.TransportPlan(list(mu), list(nu))
    m = s.integers(1, 31, 5000)
    a, b = s.random(5000), s.random(5000)
    got = plan.apply_many(m, a, b)
    assert list(got) == [plan.apply(int(mi), ai, bi) for mi, ai, bi in zip(m, a, b)]
    with pytest.raises(TypeError):
        cp.TransportPlan([Fraction(1)], [Fraction(1)]).apply_many(np.array([1]), a[:1], b[:1])


# ---- coupled samples -------------------------------------------------------

def test_l1_examples(table):
    log_x = math.log(20)
    p12 = pr.arith_profile(table, 12)
    V = np.array([0.5, 0.3, 0.2])
    ref = abs(math.log(3) - 0.5 * log_x) + abs(math.log(2) - 0.3 * log_x) + abs(math.log(2) - 0.2 * log_x)
    assert cp.l1_distance(p12, V, 0.0, log_x) == pytest.approx(ref, abs=1e-14)
    p1 = pr.arith_profile(table, 1)
    assert cp.l1_distance(p1, np.array([0.7, 0.2]), 0.1, log_x) == pytest.approx(log_x)
    p7 = pr.arith_profile(table, 7)
    assert cp.l1_distance(p7, np.array([0.99]), 0.01, 2.0) == pytest.approx(abs(math.log(7) - 1.98) + 0.02)


def test_l1_batch_matches_scalar(table):
    prof = pr.profile_arrays(table, 1000)
    s = derive_stream(6, "l1")
    gem = pd.sample_gem_batch(s, 300, math.log(1000))
    N = s.integers(1, 1001, 300)
    got = cp.l1_batch(prof.log_primes_desc[N], gem.sorted_desc(), gem.remainder, math.log(1000))
    for i in range(300):
        ref = cp.l1_distance(pr.arith_profile(table, int(N[i])), gem.sorted_desc()[i][: gem.length[i]],
                             gem.remainder[i], math.log(1000))
        assert got[i] == pytest.approx(ref, abs=1e-12)


def test_sample_coupled_scalar(table, ladder, mu_100):
    s = derive_stream(7, "sc")
    kept = 0
    for _ in range(3000):
        c = cp.sample_coupled(s, X, mu_100, table, ladder)
        assert 1 <= c.N <= X
        if c.m_equals_n:
            kept += 1
            assert c.M == c.N and cp.l1_bound_check(c)
        else:
            with pytest.raises(ValueError):
                cp.l1_bound_check(c)
    assert kept > 0.5 * 3000
    with pytest.raises(ValueError):
        cp.sample_coupled(s, 50, mu_100, table, ladder)


@pytest.fixture(scope="module")
def coupled_100(table, ladder, mu_100):
    plan = cp.TransportPlan.between(mu_100, cp.uniform_dist(X))
    prof = pr.profile_arrays(table, X)
    return cp.sample_coupled_batch(derive_stream(8, "cb"), 10**6, X, plan, table, ladder, prof), plan


def test_coupled_n_uniform(coupled_100):
    cb, _ = coupled_100
    counts = np.bincount(cb.N, minlength=X + 1)[1:]
    # N is uniform under mu-hat; the M draws are fresh so the mu-hat error
    # shows up as excess chi-square of order n * dtv^2
    assert chi2_pvalue(chi2_stat(counts, np.full(X, cb.N.size / X)), X - 1) > 1e-4


def test_mismatch_rate_matches_tv(coupled_100, mu_100):
    cb, plan = coupled_100
    rate = np.mean(~cb.m_equals_n)
    se = math.sqrt(rate * (1 - rate) / cb.N.size)
    assert abs(rate - cp.tv_distance(mu_100, cp.uniform_dist(X))) < 3 * se + 2e-3
    assert float(plan.dtv) == pytest.approx(cp.tv_distance(mu_100, cp.uniform_dist(X)))


def test_l1_bound_batch(coupled_100):
    cb, _ = coupled_100
    assert cb.l1_bound_ok().all()
    # triangle inequality: E l1 >= E log(x/N)
    assert cb.l1.mean() >= np.log(X / cb.N).mean() - 3 * cb.l1.std() / math.sqrt(cb.N.size)


def test_l1_bound_edge_and_negative_control(table, ladder):
    x = 9973
    gem = pd.GemSample(np.array([1 - 1e-12]), 1e-12, 1)
    s = cp.build_m(gem, 0.5, x, table, ladder)
    s.N, s.prof_N, s.m_equals_n = x, pr.arith_profile(table, x), True
    s.l1 = cp.l1_distance(s.prof_N, s.V, gem.remainder, math.log(x))
    assert s.l1 < 1e-10 and cp.l1_bound_check(s)
    st_ = derive_stream(9, "neg")
    mu = cp.estimate_mu(1000, 10**5, 1, "conditional", table, ladder)
    bad = False
    for _ in range(500):
        c = cp.sample_coupled(st_, 1000, mu, table, ladder)
        if c.m_equals_n and c.l1 > 1e-3 + math.log(1000 / c.N) + 2 * math.log(c.prof_N.s):
            assert cp.l1_bound_check(c)
            assert not cp.l1_bound_check(c, theta_override=0.0)
            bad = True
    assert bad


def test_independent_baseline_larger(table, ladder, coupled_100):
    prof = pr.profile_arrays(table, X)
    ind = cp.independent_l1_batch(derive_stream(9, "ind"), 100_000, X, prof)
    assert ind.mean() > coupled_100[0].l1.mean() + 0.5


# ---- J* ---------------------------------------------------------------------

def _window(points, w_min=1e-9, w_max=1e3, lump=0.0):
    pts = sorted(points)
    return pd.RWindow(np.array([p[0] for p in pts]), np.array([p[1] for p in pts]), w_min, w_max, lump)


def test_jstar_examples(ladder):
    assert cp.jstar_prefix([2], 3) == (2, 1)
    assert cp.jstar_prefix([7, 3, 2, 5], 25) == (21, 2)
    assert cp.jstar_prefix([], 25) == (1, 0)
    # Y = log q sits inside its own rung, so Q* = q and T* = W
    assert list(pr.q_many(ladder, np.log([2.0, 3.0, 7.0]))) == [2, 3, 7]
    assert cp.jstar_sample(_window([(1.0, math.log(2))]), ladder, 3, certify=False) == 2
    win = _window([(5.0, math.log(7)), (4.0, math.log(3)), (3.0, math.log(2))])
    assert cp.jstar_sample(win, ladder, 25, certify=False) == 21
    assert cp.jstar_sample(_window([(1.0, 0.3)]), ladder, 25, certify=False) == 1
    with pytest.raises(pd.WindowError):
        cp.jstar_sample(_window([(1.0, 0.3)]), ladder, 25)
    # stopping point far above w_min certifies the prefix
    assert cp.jstar_sample(win, ladder, 25) == 21


def test_j_from_window_example(ladder):
    win = _window([(3.0, math.log(3)), (2.0, math.log(2)), (1.0, 5.0)], lump=0.01)
    assert cp.j_from_window(win, ladder, 20) == 6
    with pytest.raises(pd.WindowError):
        cp.j_from_window(_window([(1.0, 0.1)]), ladder, 20)


@pytest.fixture(scope="module")
def jwindows():
    w_min, w_max = cp.window_defaults(1000)
    return pd.sample_r_window_batch(derive_stream(10, "jw"), 20_000, w_min, w_max)


def test_jstar_batch_matches_scalar(jwindows):
    lad = pr.ladder_for(math.log(1000) + 2)
    Js, ok = cp.jstar_batch(jwindows, lad, 1000)
    J, okj = cp.j_batch(jwindows, lad, 1000)
    assert ok.mean() > 0.99 and okj.mean() > 0.99
    for i in range(0, len(jwindows), 17):
        win = jwindows.window(i)
        if ok[i]:
            assert cp.jstar_sample(win, lad, 1000) == Js[i]
        else:
            with pytest.raises(pd.WindowError):
                cp.jstar_sample(win, lad, 1000)
        if okj[i]:
            assert cp.j_from_window(win, lad, 1000) == J[i]
    assert np.all(Js[ok] <= 1000)


def test_simulate_j_pairs_reproducible():
    a = cp.simulate_j_pairs(100, 5000, 3, block=2048)
    b = cp.simulate_j_pairs(100, 5000, 3, block=2048)
    assert all(np.array_equal(u, v) for u, v in zip(a[:2], b[:2])) and a[2] == b[2]
    r = cp.j_vs_jstar_rate(100, 5000, 3, block=2048)
    assert 0 <= r.lo <= r.estimate <= r.hi <= 1
    assert r.estimate == np.mean(a[0] != a[1])


def test_jstar_pmf_normalised():
    x = 50
    vals = [cp.jstar_pmf_numeric(j, x) for j in range(1, x + 1)]
    total = math.fsum(v.value for v in vals)
    err = math.fsum(v.error for v in vals)
    assert abs(total - 1) < err + 1e-9
    with pytest.raises(ValueError):
        cp.jstar_pmf_numeric(51, 50)


def test_jstar_pmf_first_order():
    dev = []
    for x in (10**2, 10**3):
        v = cp.jstar_pmf_numeric(1, x).value * math.log(x)
        assert 0.6 <= v <= 1.4
        dev.append(abs(v - 1))
    assert dev[1] < dev[0]
