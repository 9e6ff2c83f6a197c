import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from helpers import random_spd
from oracles import brute_force_ils
from urbanrtk.ambiguity import (ApertureCache, IlsProblem, IlsResult, NotPositiveDefiniteError, WidenTrialsError,
                                adop, bootstrap_success_rate, calibrate_aperture_threshold, decorrelate,
                                difference_test, ils_cost, ils_search, ldl, reduce_ldl)


def test_ldl_reconstructs():
    rng = np.random.default_rng(0)
    for n in range(1, 8):
        Q = random_spd(rng, n, 1e3)
        L, D = ldl(Q)
        assert np.allclose(np.tril(L), L)
        assert np.allclose(np.diag(L), 1.0)
        assert np.allclose(L.T @ np.diag(D) @ L, Q, rtol=1e-10, atol=1e-12)


def test_ldl_rejects_indefinite():
    with pytest.raises(NotPositiveDefiniteError):
        ldl(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_reduction_is_unimodular_and_consistent():
    rng = np.random.default_rng(1)
    for n in range(2, 7):
        Q = random_spd(rng, n, 1e4)
        L, D = ldl(Q)
        Z, L2, D2 = reduce_ldl(L, D)
        assert np.array_equal(Z, np.rint(Z))
        assert abs(abs(np.linalg.det(Z)) - 1.0) < 1e-9
        assert np.allclose(Z.T @ Q @ Z, L2.T @ np.diag(D2) @ L2, rtol=1e-8, atol=1e-10)
        # decorrelation never makes the product of conditional variances change
        assert np.prod(D2) == pytest.approx(np.prod(D), rel=1e-8)


def test_decorrelate_lowers_correlation():
    Q = np.array([[6.290, 5.978, 0.544], [5.978, 6.292, 2.340], [0.544, 2.340, 6.288]])
    Z, Qz = decorrelate(Q)
    rho = lambda M: np.abs(M / np.sqrt(np.outer(np.diag(M), np.diag(M))) - np.eye(len(M))).max()
    assert rho(Qz) < rho(Q)


def test_ils_textbook_example():
    # three-dimensional example with a well-known solution
    Q = np.array([[6.290, 5.978, 0.544], [5.978, 6.292, 2.340], [0.544, 2.340, 6.288]])
    a = np.array([5.45, 3.10, 2.97])
    r = ils_search(IlsProblem(a, Q))
    assert r.best.tolist() == [5, 3, 4]
    assert r.cost_best <= r.cost_second
    assert r.cost_best == pytest.approx(ils_cost(a, Q, r.best), rel=1e-10)


def test_ils_matches_brute_force_small():
    rng = np.random.default_rng(7)
    checked = 0
    for _ in range(60):
        n = int(rng.integers(2, 5))
        Q = random_spd(rng, n, 10 ** rng.uniform(0, 3), scale=0.3)
        a = rng.normal(0, 5, n)
        r = ils_search(IlsProblem(a, Q))
        bf = brute_force_ils(a, Q, r.cost_second + 1e-9)
        if bf is None:
            continue
        checked += 1
        assert r.best.tolist() == bf[0].tolist()
        assert r.cost_second == pytest.approx(bf[3], rel=1e-9, abs=1e-12)
    assert checked > 40


def test_ils_undecorrelated_agrees():
    rng = np.random.default_rng(3)
    for _ in range(30):
        n = int(rng.integers(2, 6))
        Q = random_spd(rng, n, 100, scale=0.5)
        a = rng.normal(0, 3, n)
        r1 = ils_search(IlsProblem(a, Q))
        r2 = ils_search(IlsProblem(a, Q), decorrelated=False)
        assert r1.cost_best == pytest.approx(r2.cost_best, rel=1e-9, abs=1e-12)
        assert r1.cost_second == pytest.approx(r2.cost_second, rel=1e-9, abs=1e-12)


def test_ils_input_errors():
    with pytest.raises(ValueError):
        ils_search(IlsProblem(np.zeros(0), np.zeros((0, 0))))
    with pytest.raises(ValueError):
        IlsProblem(np.zeros(2), np.eye(3))
    with pytest.raises(NotPositiveDefiniteError):
        ils_search(IlsProblem(np.zeros(2), -np.eye(2)))


@given(st.integers(2, 6), st.integers(0, 2 ** 31 - 1), st.integers(0, 1000))
def test_ils_integer_shift_equivariance(n, seed, k):
    rng = np.random.default_rng(seed)
    Q = random_spd(rng, n, 50, scale=0.4)
    a = rng.normal(0, 2, n)
    shift = rng.integers(-k, k + 1, n)
    r0 = ils_search(IlsProblem(a, Q))
    r1 = ils_search(IlsProblem(a + shift, Q))
    assert (r1.best - shift).tolist() == r0.best.tolist()
    assert r1.cost_best == pytest.approx(r0.cost_best, rel=1e-7, abs=1e-9)


@given(st.floats(0, 100), st.floats(0, 100), st.floats(0, 50), st.floats(0, 50))
def test_difference_test_monotone_in_second_cost(c1, c2, extra, mu):
    c2 = max(c1, c2)
    r = IlsResult(np.zeros(1, int), np.ones(1, int), c1, c2)
    r2 = IlsResult(np.zeros(1, int), np.ones(1, int), c1, c2 + extra)
    if difference_test(r, mu):
        assert difference_test(r2, mu)


def test_difference_test_boundary_inclusive():
    r = IlsResult(np.zeros(1, int), np.ones(1, int), 1.0, 3.0)
    assert difference_test(r, 2.0)
    assert not difference_test(r, np.nextafter(2.0, 3.0))


def test_bootstrap_and_adop():
    assert bootstrap_success_rate(np.array([1e-6, 1e-6])) == pytest.approx(1.0)
    D = np.array([0.04, 0.09])
    expect = math.erf(1 / (2 * 0.2 * math.sqrt(2))) * math.erf(1 / (2 * 0.3 * math.sqrt(2)))
    assert bootstrap_success_rate(D) == pytest.approx(expect, rel=1e-12)
    assert adop(np.diag([0.04, 0.09])) == pytest.approx(math.sqrt(0.2 * 0.3), rel=1e-12)


def _weak_q():
    rng = np.random.default_rng(11)
    return random_spd(rng, 4, 30, scale=0.12)


def test_calibration_deterministic_and_positive():
    Q = _weak_q()
    mu1 = calibrate_aperture_threshold(Q, 0.001, 10_000, seed=5)
    mu2 = calibrate_aperture_threshold(Q, 0.001, 10_000, seed=5)
    assert mu1 == mu2 and mu1 > 0


def test_calibration_shortcut_for_precise_problems():
    Q = np.eye(3) * 1e-3
    assert calibrate_aperture_threshold(Q, 0.001, 10_000) == 0.0


def test_calibration_requires_enough_trials():
    with pytest.raises(WidenTrialsError) as ei:
        calibrate_aperture_threshold(_weak_q(), 0.001, 5_000)
    assert ei.value.required == 10_000


def test_calibration_threshold_increases_as_target_tightens():
    Q = _weak_q()
    loose = calibrate_aperture_threshold(Q, 0.01, 20_000, seed=2, shortcut=False)
    tight = calibrate_aperture_threshold(Q, 0.001, 20_000, seed=2, shortcut=False)
    assert tight >= loose


def test_cache_reuses_and_persists(tmp_path):
    Q = _weak_q()
    c = ApertureCache(0.001, 10_000, seed=0)
    mu = c.threshold(Q)
    assert c.misses == 1 and len(c) == 1
    assert c.threshold(Q * (1 + 1e-6)) == mu
    assert c.misses == 1
    p = tmp_path / "cache.csv"
    c.save(p)
    c2 = ApertureCache(0.001, 10_000, seed=0)
    c2.load(p)
    assert c2.threshold(Q) == mu and c2.misses == 0


def test_cache_load_rejects_other_failure_rate(tmp_path):
    c = ApertureCache(0.001, 10_000)
    c.threshold(_weak_q())
    p = tmp_path / "cache.csv"
    c.save(p)
    with pytest.raises(ValueError):
        ApertureCache(0.01, 10_000).load(p)


def test_cache_bypasses_precise_problems():
    c = ApertureCache(0.001, 10_000)
    assert c.threshold(np.eye(5) * 1e-3) == 0.0
    assert len(c) == 0
