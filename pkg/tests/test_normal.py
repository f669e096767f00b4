import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from stresswalk.normal import log_normal_cdf, normal_cdf, normal_quantile, normal_sf

mpmath.mp.dps = 40

SMALLEST_NORMAL = 2.2250738585072014e-308


def mp_cdf(z):
    return mpmath.ncdf(mpmath.mpf(z))


def asymptotic_lower_tail(z):
    # phi(z)/|z| * (1 - 1/z^2 + 3/z^4), independent of erfc
    x = abs(z)
    phi = math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)
    return phi / x * (1 - 1 / x**2 + 3 / x**4)


def test_center():
    assert normal_cdf(0.0) == 0.5


def test_moderate_value_against_high_precision():
    # mpmath at 40 digits: Phi(-1.217) = 0.111802...
    assert normal_cdf(-1.217) == pytest.approx(float(mp_cdf(-1.217)), rel=1e-12)
    assert normal_cdf(-1.217) == pytest.approx(0.1118021, abs=5e-8)


def test_deep_tail_matches_asymptotic_expansion():
    p = normal_cdf(-19.0)
    assert p == pytest.approx(8.527e-81, rel=1e-3)
    # truncation error of the 3-term expansion is ~15/z^6 ~ 3e-7
    assert p == pytest.approx(asymptotic_lower_tail(-19.0), rel=1e-6)


def test_relative_accuracy_log_grid():
    zs = np.concatenate([-np.geomspace(1e-8, 40, 400), np.geomspace(1e-8, 40, 400)])
    for z in zs:
        exact = mp_cdf(z)
        if exact < SMALLEST_NORMAL:
            continue
        assert abs(mpmath.mpf(normal_cdf(z)) / exact - 1) < 1e-9, z


def test_log_cdf_beyond_underflow():
    for z in (-37.0, -38.5, -40.0, -60.0, -200.0):
        exact = float(mpmath.log(mp_cdf(z)))
        # absolute error in log space == relative error in the probability
        assert abs(log_normal_cdf(z) - exact) < 1e-9


def test_log_cdf_near_one():
    assert log_normal_cdf(10.0) == pytest.approx(-7.619853024160527e-24, rel=1e-9)


@given(st.floats(min_value=-8, max_value=8))
def test_symmetry(z):
    assert abs(normal_cdf(z) + normal_cdf(-z) - 1.0) <= 1e-15


@given(st.floats(min_value=-40, max_value=40), st.floats(min_value=0, max_value=1))
def test_monotone(z, dz):
    assert normal_cdf(z) <= normal_cdf(z + dz)


def test_array_matches_scalar():
    zs = np.linspace(-30, 5, 71)
    arr = normal_cdf(zs)
    assert np.allclose(arr, [normal_cdf(float(z)) for z in zs], rtol=1e-12, atol=0)
    assert np.allclose(normal_sf(-zs), arr, rtol=1e-12, atol=0)


def test_quantile_roundtrip():
    for p in (1e-10, 0.01, 0.375 / 75.25, 0.5, 0.9):
        assert normal_cdf(normal_quantile(p)) == pytest.approx(p, rel=1e-12)
