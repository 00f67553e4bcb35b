import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mpg import special as S


def m_exact(d, alpha):
    # parabolic-cylinder closed form, independent of the recursion
    mpmath.mp.dps = 40
    a = mpmath.mpf(alpha)
    val = (mpmath.npdf(a) * mpmath.factorial(d) * mpmath.exp(a * a / 4)
           * mpmath.pcfd(-d - 1, -a))
    return float(val)


def test_pdf_values():
    assert S.std_normal_pdf(0.0) == pytest.approx(0.3989423, abs=1e-7)
    assert S.std_normal_pdf(1.0) == pytest.approx(0.2419707, abs=1e-7)
    assert S.std_normal_pdf(-1.7) == S.std_normal_pdf(1.7)


def test_cdf_values():
    assert S.std_normal_cdf(0.0) == 0.5
    assert S.std_normal_cdf(1.0) == pytest.approx(0.8413447, abs=1e-7)
    assert S.std_normal_cdf(-1.0) == pytest.approx(0.1586553, abs=1e-7)
    # lower tail keeps relative accuracy
    assert S.std_normal_cdf(-30.0) == pytest.approx(float(mpmath.ncdf(-30)), rel=1e-12)


def test_m_function_examples():
    assert S.m_function(0, 0.0) == 0.5
    assert S.m_function(1, 0.0) == pytest.approx(0.3989423, abs=1e-7)
    # M2(1) = 1*M1(1) + 1*M0(1) = 1.0833155 + 0.8413447
    assert S.m_function(2, 1.0) == pytest.approx(1.9246602, abs=1e-7)


@pytest.mark.parametrize("d", [0, 1, 2, 3, 5, 10])
@pytest.mark.parametrize("alpha", [-40.0, -12.0, -5.0, -2.5, -1.0, 0.0, 0.7, 3.0, 10.0, 30.0])
def test_m_function_matches_closed_form(d, alpha):
    assert S.m_function(d, alpha) == pytest.approx(m_exact(d, alpha), rel=1e-10)


@pytest.mark.parametrize("d", [0, 1, 4, 10])
@pytest.mark.parametrize("alpha", [-5.0, -0.5, 0.0, 2.0, 5.0])
def test_quadrature_oracle(d, alpha):
    assert S.m_function_quadrature(d, alpha) == pytest.approx(m_exact(d, alpha), rel=1e-9)


def test_quadrature_examples():
    assert abs(S.m_function_quadrature(0, 0.0, 1e-10) - 0.5) <= 1e-10
    assert abs(S.m_function_quadrature(1, 0.0, 1e-10) - 1 / math.sqrt(2 * math.pi)) <= 1e-9
    assert S.m_function_quadrature(5, 2.0) == pytest.approx(S.m_function(5, 2.0), rel=1e-8)


def test_quadrature_rejects_bad_tolerance():
    with pytest.raises(ValueError):
        S.m_function_quadrature(1, 0.0, rel_tol=0.5)


def test_m_ratio_examples():
    assert S.m_ratio(2, 0.0) == pytest.approx(math.sqrt(math.pi / 2), abs=1e-7)
    assert S.m_ratio(1, 0.0) == pytest.approx(0.7978846, abs=1e-7)
    want = S.m_function_quadrature(0, -8.0) / S.m_function_quadrature(1, -8.0)
    assert S.m_ratio(2, -8.0) == pytest.approx(want, rel=1e-6)


def test_m_ratio_grows_like_abs_alpha():
    # (d-1) M_{d-2} / M_{d-1} ~ |alpha| as alpha -> -inf
    r = S.m_ratio(2, -200.0)
    assert r == pytest.approx(200.0, rel=1e-3)


def test_m_function_overflow_is_reported():
    with pytest.raises(OverflowError):
        S.m_function(10, 1e200)


@settings(max_examples=60, deadline=None)
@given(d=st.integers(2, 10), alpha=st.floats(-30.0, 30.0))
def test_recurrence_identity(d, alpha):
    # M_d = alpha M_{d-1} + (d-1) M_{d-2}, checked through logs for range
    lm = [S.log_m_function(k, alpha) for k in (d - 2, d - 1, d)]
    rhs = alpha * math.exp(lm[1] - lm[2]) + (d - 1) * math.exp(lm[0] - lm[2])
    assert rhs == pytest.approx(1.0, rel=1e-9, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(d=st.integers(1, 10), alpha=st.floats(-30.0, 30.0))
def test_derivative_identity(d, alpha):
    # M_d' = d M_{d-1}: compare with a central difference of log M_d
    h = 1e-5
    num = (S.log_m_function(d, alpha + h) - S.log_m_function(d, alpha - h)) / (2 * h)
    assert S.m_ratio(d + 1, alpha) == pytest.approx(num, rel=1e-6, abs=1e-6)


def test_array_versions_match_scalar():
    alpha = np.linspace(-20, 20, 41).reshape(41, 1) * np.ones((1, 3))
    got = S.log_m_function_array(3, alpha)
    assert got.shape == alpha.shape
    want = np.vectorize(lambda a: S.log_m_function(3, a))(alpha)
    np.testing.assert_allclose(got, want, rtol=1e-13)
    np.testing.assert_allclose(S.m_ratio_array(3, alpha),
                               np.vectorize(lambda a: S.m_ratio(3, a))(alpha), rtol=1e-12)
    assert np.shape(S.m_ratio_array(2, 0.3)) == ()
