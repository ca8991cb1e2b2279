import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pdcouple import primes as pr


def naive_primes(limit):
    return [n for n in range(2, limit + 1) if all(n % d for d in range(2, math.isqrt(n) + 1))]


def test_small_tables():
    assert list(pr.build_prime_table(10).primes) == [2, 3, 5, 7]
    assert list(pr.build_prime_table(2).primes) == [2]


def test_table_limits():
    with pytest.raises(pr.CapacityError):
        pr.build_prime_table(1)
    with pytest.raises(pr.CapacityError):
        pr.build_prime_table(pr.MAX_TABLE_LIMIT + 1)


def test_prime_count_1e6():
    t = pr.build_prime_table(10**6)
    assert len(t.primes) == 78498
    # second, independent sieve: odd-only bytearray
    n = 10**6
    odd = bytearray([1]) * (n // 2 + 1)
    odd[0] = 0
    for i in range(3, math.isqrt(n) + 1, 2):
        if odd[i // 2]:
            odd[i * i // 2 :: i] = bytes(len(odd[i * i // 2 :: i]))
    assert 1 + sum(odd[: (n - 1) // 2 + 1]) == 78498


def test_table_matches_naive(table_1e4):
    assert list(table_1e4.primes[table_1e4.primes <= 3000]) == naive_primes(3000)
    spf = table_1e4.smallest_factor
    for n in range(2, 3000):
        p = int(spf[n])
        assert n % p == 0 and p == min(d for d in range(2, n + 1) if n % d == 0)


def test_theta_prefix_accuracy(table_1e4):
    logs = [math.log(p) for p in table_1e4.primes]
    ref = np.array([math.fsum(logs[: i + 1]) for i in range(0, len(logs), 97)])
    got = table_1e4.theta_prefix[::97]
    assert np.all(np.abs(got - ref) <= 1e-12 * np.arange(1, len(logs) + 1, 97))


def test_theta_examples(table_1e4):
    assert pr.theta(table_1e4, 1) == 0.0
    assert pr.theta(table_1e4, 2) == pytest.approx(math.log(2), abs=1e-15)
    assert pr.theta(table_1e4, 10) == pytest.approx(math.log(210), abs=1e-14)
    assert pr.theta(table_1e4, 10.9) == pr.theta(table_1e4, 10)
    with pytest.raises(ValueError):
        pr.theta(table_1e4, 10**4 + 1)


def test_theta_many_matches_scalar(table_1e4):
    ys = np.array([0.5, 1, 2, 2.5, 97, 97.5, 9999])
    assert np.array_equal(pr.theta_many(table_1e4, ys), [pr.theta(table_1e4, y) for y in ys])


def test_ladder_head():
    lad = pr.ladder_for(5)
    assert list(lad.q[:7]) == [2, 3, 4, 5, 7, 8, 9]
    assert list(lad.v[:7]) == [1, 1, 2, 1, 1, 3, 2]
    assert lad.lam[0] == pytest.approx(0.561459, abs=1e-6)
    # the closed form gives 0.9256902; the published 0.925688 is off in the 6th digit
    assert lad.lam[1] == pytest.approx(math.exp(0.5 - pr.EULER_GAMMA), rel=1e-15)
    assert lad.lam[1] == pytest.approx(0.925688, abs=5e-6)
    assert lad.lam[2] == pytest.approx(1.29190, abs=1e-5)
    assert lad.lam[2] == pytest.approx(math.exp(-pr.EULER_GAMMA + 0.5 + 1 / 3), rel=1e-15)
    assert np.all(np.diff(lad.lam) > 0)


def test_ladder_is_all_prime_powers():
    lad = pr.ladder_for(8)
    limit = int(lad.q[-1])
    ref = [n for n in range(2, limit + 1) if len({p for p in naive_primes(n) if n % p == 0}) == 1]
    assert list(lad.q) == ref
    assert lad.lam[-1] > 8 >= lad.lam[-2]


def test_ladder_envelope(ladder_small):
    # |lambda_j - log q_j| (log q_j)^2 stays bounded by one measured constant
    big = ladder_small.q >= 100
    dev = np.abs(ladder_small.lam[1:][big] - ladder_small.log_q[big]) * ladder_small.log_q[big] ** 2
    assert dev.max() < 2.0


def test_step_h_examples(ladder_small):
    assert pr.step_h(ladder_small, 0.3) == (0.0, 0.3)
    h, _ = pr.step_h(ladder_small, 0.7)
    assert h == math.log(2)
    h, r = pr.step_h(ladder_small, 1.0986)
    assert h == math.log(3) and r < 1e-4
    with pytest.raises(ValueError):
        pr.step_h(ladder_small, 0.0)
    with pytest.raises(pr.LadderCoverageError):
        pr.step_h(ladder_small, ladder_small.t_max + 1)


@given(st.floats(min_value=1e-6, max_value=13.0))
def test_h_many_matches_scalar(ladder_small, t):
    h, r = pr.step_h(ladder_small, t)
    assert pr.h_many(ladder_small, np.array([t]))[0] == h
    assert pr.r_many(ladder_small, np.array([t]))[0] == r
    assert pr.q_many(ladder_small, np.array([t]))[0] == round(math.exp(h))


def test_r_bound_shape(ladder_small):
    t = np.linspace(1e-3, ladder_small.t_max, 400_001)
    r = pr.r_many(ladder_small, t)
    c = np.max(r / np.minimum(t, t**-2.0))
    assert c < 3.0
    assert pr.r_sup(ladder_small) == pytest.approx(pr.LAMBDA_0)
    assert r.max() <= pr.r_sup(ladder_small) + 1e-12


def test_beyond_identity(ladder_small):
    t = np.array([ladder_small.t_max + 3.0])
    assert pr.h_many(ladder_small, t, beyond="identity")[0] == t[0]
    with pytest.raises(pr.LadderCoverageError):
        pr.h_many(ladder_small, t)


def test_profile_examples(table_1e4):
    p = pr.arith_profile(table_1e4, 12)
    assert (p.prime_seq, p.s, p.flat, p.omega, p.big_omega) == ((3, 2, 2), 4, 3, 2, 3)
    p = pr.arith_profile(table_1e4, 1)
    assert (p.prime_seq, p.s, p.flat) == ((), 1, 1)
    p = pr.arith_profile(table_1e4, 360)
    assert (p.s, p.flat) == (72, 5)
    with pytest.raises(ValueError):
        pr.arith_profile(table_1e4, 0)


def brute_squarefull(n):
    best = 1
    for d in range(1, n + 1):
        if n % d == 0 and all(d % (p * p) == 0 for p in naive_primes(d) if d % p == 0):
            best = d
    return best


def test_squarefull_brute(table_1e4):
    for n in list(range(1, 400)) + [720, 1000, 1024, 3600, 9800]:
        assert pr.arith_profile(table_1e4, n).s == brute_squarefull(n)


def test_profile_roundtrip(table_1e5):
    for n in range(1, 10**5 + 1, 7):
        p = pr.arith_profile(table_1e5, n)
        assert math.prod(p.prime_seq) == n
        assert list(p.prime_seq) == sorted(p.prime_seq, reverse=True)
        assert p.s * p.flat == n and math.gcd(p.s, p.flat) == 1


def test_factor_beyond_table(table_1e4):
    n = 9973 * 9967
    assert pr.factor(table_1e4, n) == [9967, 9973]
    assert pr.factor(table_1e4, 2**20 * 3) == [2] * 20 + [3]
    with pytest.raises(pr.CapacityError):
        pr.factor(table_1e4, 10**8 + 7)


def test_profile_arrays_match_scalar(table_1e4):
    pa = pr.profile_arrays(table_1e4, 5000)
    for n in range(1, 5001, 13):
        p = pr.arith_profile(table_1e4, n)
        assert pa.s[n] == p.s and pa.big_omega[n] == p.big_omega
        logs = [math.log(q) for q in p.prime_seq]
        assert np.allclose(pa.log_primes_desc[n, : len(logs)], logs)
        assert np.all(pa.log_primes_desc[n, len(logs) :] == 0)


def test_extra_prime_examples(table_1e4):
    assert pr.extra_prime(table_1e4, 0.3, 1.5) == 1
    assert pr.extra_prime(table_1e4, 0.5, 10) == 5
    assert pr.extra_prime(table_1e4, 0.99, 10) == 7
    with pytest.raises(ValueError):
        pr.extra_prime(table_1e4, 0.0, 10)


@given(st.floats(0.001, 0.999), st.floats(0.001, 0.999), st.floats(1.0, 9999.0))
def test_extra_prime_monotone(table_1e4, u1, u2, y):
    a, b = sorted((u1, u2))
    pa, pb = pr.extra_prime(table_1e4, a, y), pr.extra_prime(table_1e4, b, y)
    assert pa <= pb <= max(y, 1)
    got = pr.extra_prime_many(table_1e4, np.array([a, b]), np.array([y, y]))
    assert list(got) == [pa, pb]


def test_sieve_cache_roundtrip(tmp_path, table_1e4):
    path = tmp_path / "sieve.bin"
    pr.write_sieve_cache(path, table_1e4)
    raw = path.read_bytes()
    assert raw[:4] == b"PDC1" and int.from_bytes(raw[4:12], "little") == 10**4
    back = pr.read_sieve_cache(path)
    assert np.array_equal(back.primes, table_1e4.primes)
    path.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(ValueError):
        pr.read_sieve_cache(path)


def test_ladder_csv(tmp_path):
    lad = pr.ladder_for(4)
    path = tmp_path / "ladder.csv"
    pr.dump_ladder_csv(lad, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "j,q_j,v_j,lambda_j"
    assert lines[1].startswith("0,1,0,")
    assert lines[2].startswith("1,2,1,")
    assert len(lines) == len(lad.q) + 2
