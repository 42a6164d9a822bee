import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from gammavi.errors import DomainError, SolverError
from gammavi.special import (digamma, inv_reg_inc_gamma, log_gamma, reg_inc_gamma,
                             std_normal_inv_cdf)


# ---- log_gamma

@pytest.mark.parametrize("a, expected", [(1.0, 0.0), (5.0, math.log(24.0))])
def test_log_gamma_exact_values(a, expected):
    assert log_gamma(a) == pytest.approx(expected, abs=1e-14)


def test_log_gamma_half_against_mpmath():
    ref = float(mp.log(mp.sqrt(mp.pi)))
    assert log_gamma(0.5) == pytest.approx(ref, rel=1e-13)
    assert log_gamma(0.5) == pytest.approx(0.5723649429, abs=1e-10)


@pytest.mark.parametrize("a", [1e-6, 1e-3, 0.37, 2.5, 17.0, 1234.5, 1e6])
def test_log_gamma_relative_accuracy(a):
    with mp.workdps(30):
        ref = float(mp.loggamma(a))
    assert abs(log_gamma(a) - ref) <= 1e-12 * max(abs(ref), 1e-300) + 1e-15


@pytest.mark.parametrize("bad", [0.0, -1.0, float("nan"), float("inf")])
def test_log_gamma_domain(bad):
    with pytest.raises(DomainError):
        log_gamma(bad)


# ---- digamma

def test_digamma_one_is_minus_euler_gamma():
    assert digamma(1.0) == pytest.approx(-float(mp.euler), abs=1e-12)
    assert digamma(1.0) == pytest.approx(-0.5772156649, abs=1e-10)


def test_digamma_recurrence_at_two():
    assert digamma(2.0) == pytest.approx(0.4227843351, abs=1e-10)


@pytest.mark.parametrize("a", [1e-6, 0.01, 0.5, 3.0, 77.0, 1e6])
def test_digamma_relative_accuracy(a):
    with mp.workdps(30):
        ref = float(mp.digamma(a))
    assert digamma(a) == pytest.approx(ref, rel=1e-10)


@pytest.mark.parametrize("a", np.geomspace(0.1, 100, 9))
def test_digamma_matches_central_difference_of_log_gamma(a):
    h = 1e-5
    fd = (log_gamma(a + h) - log_gamma(a - h)) / (2 * h)
    assert digamma(a) == pytest.approx(fd, abs=1e-6)


def test_digamma_domain():
    with pytest.raises(DomainError):
        digamma(0.0)


# ---- reg_inc_gamma

def test_reg_inc_gamma_exponential_cases():
    assert reg_inc_gamma(1.0, math.log(2.0)) == pytest.approx(0.5, abs=1e-15)
    assert reg_inc_gamma(1.0, 0.0) == 0.0


def test_reg_inc_gamma_against_quadrature():
    a, x = 2.5, 2.5
    val, _ = integrate.quad(lambda t: t ** (a - 1) * math.exp(-t), 0, x, epsabs=1e-14, epsrel=1e-14)
    assert reg_inc_gamma(a, x) == pytest.approx(val / math.gamma(a), abs=1e-10)


@pytest.mark.parametrize("a, x", [(0.05, 0.3), (0.7, 2.0), (3.0, 1.0), (40.0, 35.0), (500.0, 520.0)])
def test_reg_inc_gamma_against_mpmath(a, x):
    with mp.workdps(30):
        ref = float(mp.gammainc(a, 0, x, regularized=True))
    assert reg_inc_gamma(a, x) == pytest.approx(ref, abs=1e-12)


@pytest.mark.parametrize("a", [0.01, 0.5, 1.0, 4.0, 300.0])
def test_reg_inc_gamma_monotone_in_x(a):
    xs = np.linspace(1e-6, 3 * a + 10, 400)
    vals = reg_inc_gamma(a, xs)
    assert np.all(np.diff(vals) >= 0)
    assert np.all((vals >= 0) & (vals <= 1))


@pytest.mark.parametrize("a", [0.3, 1.0, 2.5, 10.0])
@pytest.mark.parametrize("x", [0.1, 1.0, 4.0, 12.0])
def test_reg_inc_gamma_recurrence(a, x):
    lhs = reg_inc_gamma(a + 1, x)
    rhs = reg_inc_gamma(a, x) - math.exp(a * math.log(x) - x - math.lgamma(a + 1))
    assert lhs == pytest.approx(rhs, abs=1e-10)


@pytest.mark.parametrize("a, x", [(0.0, 1.0), (-1.0, 1.0), (1.0, -0.5)])
def test_reg_inc_gamma_domain(a, x):
    with pytest.raises(DomainError):
        reg_inc_gamma(a, x)


# ---- inv_reg_inc_gamma

def test_inverse_exponential_cases():
    assert inv_reg_inc_gamma(1.0, 0.5) == pytest.approx(math.log(2.0), rel=1e-13)
    assert inv_reg_inc_gamma(1.0, -math.expm1(-3.0)) == pytest.approx(3.0, rel=1e-12)


@pytest.mark.parametrize("a", [0.05, 0.5, 2.0, 50.0, 5000.0])
@pytest.mark.parametrize("p", [0.01, 0.5, 0.99])
def test_inverse_round_trip(a, p):
    x = inv_reg_inc_gamma(a, p)
    assert reg_inc_gamma(a, x) == pytest.approx(p, abs=1e-10)


@pytest.mark.parametrize("a", [0.01, 0.2, 1.0, 7.5, 1e3, 1e5, 1e6])
@pytest.mark.parametrize("p", [1e-9, 1e-3, 0.3, 0.7, 0.999, 1 - 1e-9])
def test_inverse_converges_over_supported_range(a, p):
    try:
        x = inv_reg_inc_gamma(a, p)
    except SolverError as exc:
        # only legitimate failure: the quantile underflows double precision
        assert "underflow" in str(exc)
        assert (math.log(p) + math.lgamma(a + 1)) / a < -700
        return
    assert reg_inc_gamma(a, x) == pytest.approx(p, abs=1e-12)


@pytest.mark.parametrize("a, p", [(0.3, 0.4), (2.0, 1e-6), (900.0, 0.99)])
def test_inverse_against_mpmath_root(a, p):
    with mp.workdps(40):
        ref = mp.findroot(lambda x: mp.gammainc(a, 0, x, regularized=True) - p,
                          inv_reg_inc_gamma(a, p) * 1.001)
    assert inv_reg_inc_gamma(a, p) == pytest.approx(float(ref), rel=1e-11)


def test_inverse_vectorized_matches_scalar():
    a = np.array([0.3, 2.0, 40.0])
    p = np.array([0.2, 0.5, 0.9])
    vec = inv_reg_inc_gamma(a, p)
    assert np.array_equal(vec, [inv_reg_inc_gamma(ai, pi) for ai, pi in zip(a, p)])


def test_inverse_reports_non_convergence():
    with pytest.raises(SolverError):
        inv_reg_inc_gamma(2.0, 0.5, max_iter=1)


def test_inverse_reports_underflow_instead_of_zero():
    with pytest.raises(SolverError, match="underflow"):
        inv_reg_inc_gamma(0.01, 1e-10)


@pytest.mark.parametrize("a, p", [(1.0, 0.0), (1.0, 1.0), (0.0, 0.5), (1.0, float("nan"))])
def test_inverse_domain(a, p):
    with pytest.raises(DomainError):
        inv_reg_inc_gamma(a, p)


@settings(max_examples=150, deadline=None)
@given(a=st.floats(1e-2, 1e6), p=st.floats(1e-8, 1 - 1e-8))
def test_inverse_consistency_property(a, p):
    try:
        x = inv_reg_inc_gamma(a, p)
    except SolverError:
        assert (math.log(p) + math.lgamma(a + 1)) / a < -700
        return
    assert x > 0
    assert abs(reg_inc_gamma(a, x) - p) <= 1e-12


# ---- std_normal_inv_cdf

def test_normal_quantile_values():
    assert std_normal_inv_cdf(0.5) == 0.0
    ref = float(mp.sqrt(2) * mp.erfinv(2 * mp.mpf("0.975") - 1))
    assert std_normal_inv_cdf(0.975) == pytest.approx(ref, abs=1e-9)
    assert std_normal_inv_cdf(0.975) == pytest.approx(1.9599640, abs=1e-7)


@pytest.mark.parametrize("p", [1e-12, 1e-6, 0.01, 0.3, 0.9, 1 - 1e-12])
def test_normal_quantile_accuracy(p):
    with mp.workdps(40):
        ref = float(mp.sqrt(2) * mp.erfinv(2 * mp.mpf(p) - 1))
    assert std_normal_inv_cdf(p) == pytest.approx(ref, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(p=st.floats(1e-12, 1 - 1e-12))
def test_normal_quantile_antisymmetry(p):
    q = 1.0 - p          # round once so that p2 and q sum to exactly one
    p2 = 1.0 - q
    assert std_normal_inv_cdf(p2) == pytest.approx(-std_normal_inv_cdf(q), abs=1e-9)


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5])
def test_normal_quantile_domain(p):
    with pytest.raises(DomainError):
        std_normal_inv_cdf(p)
