import numpy as np
import pytest
from hypothesis import given, strategies as st

from stripflow import EdgeCoefficients, Profile, treebolic_coefficients
from stripflow.errors import ParameterError


def test_constant_and_power_evaluation():
    c = Profile.constant(3.0)
    assert c(1.7) == 3.0
    p = Profile.power(2.0, -2.0)
    assert p(2.0) == pytest.approx(0.5)
    assert p.derivative(2.0) == pytest.approx(-0.5)


def test_positivity_enforced():
    with pytest.raises(ParameterError):
        Profile.constant(0.0)
    with pytest.raises(ParameterError):
        Profile.tabulated([0.0, 1.0], [1.0, -1.0])


@given(st.floats(0.1, 10.0), st.floats(-3.0, 3.0), st.floats(0.1, 10.0),
       st.floats(-3.0, 3.0))
def test_power_algebra(c1, g1, c2, g2):
    a = Profile.power(c1, g1)
    b = Profile.power(c2, g2)
    prod = a * b
    for sigma in (0.5, 1.0, 2.7):
        assert prod(sigma) == pytest.approx(a(sigma) * b(sigma), rel=1e-12)
    sq = a**0.5
    assert sq(2.0) == pytest.approx(np.sqrt(a(2.0)), rel=1e-12)


def test_power_integrals_closed_form():
    p = Profile.power(1.0, -2.0)
    # sqrt integral of sigma^-2 is log
    assert p.sqrt_integral(1.0, 2.0) == pytest.approx(np.log(2.0), rel=1e-14)
    assert p.integral(1.0, 2.0) == pytest.approx(0.5, rel=1e-14)
    q = Profile.power(2.0, 1.0)
    assert q.integral(0.0, 2.0) == pytest.approx(4.0, rel=1e-14)


def test_tabulated_log_linear():
    t = Profile.tabulated([0.0, 1.0, 2.0], [1.0, np.e, np.e**2])
    # log-linear interpolation of exp(sigma) is exact at and between knots
    assert t(0.5) == pytest.approx(np.exp(0.5), rel=1e-12)
    assert t.integral(0.0, 2.0) == pytest.approx(np.e**2 - 1.0, rel=1e-10)
    assert (t**2)(0.7) == pytest.approx(np.exp(1.4), rel=1e-12)


def test_reduction_consistency_a_phi_equals_m():
    for n in (0, 1):
        c = treebolic_coefficients(level=2, q=2.0, alpha=0.7, beta=0.5, n=n)
        sig = np.linspace(2.0, 4.0, 9)
        assert np.allclose(c.a(sig) * c.phi(sig), c.m(sig), rtol=1e-12)


def test_treebolic_coefficients_match_measure():
    # level-k strip: a = beta^k sigma^alpha, m = beta^k sigma^(alpha-2)
    c = treebolic_coefficients(level=1, q=2.0, alpha=0.0, beta=1.0, n=1)
    assert c.m(1.5) == pytest.approx(1.5**-2, rel=1e-14)
    assert c.a(1.5) == pytest.approx(1.0, rel=1e-14)
    c2 = treebolic_coefficients(level=3, q=2.0, alpha=2.0, beta=0.5, n=1)
    # alpha = 2 makes the mass density level-weighted Lebesgue
    assert c2.m(5.0) == pytest.approx(0.5**3, rel=1e-14)


def test_fiber_dimension_checked():
    with pytest.raises(ParameterError):
        EdgeCoefficients(phi=Profile.constant(1.0), psi=Profile.constant(1.0), n=2)
