import math

import numpy as np
import pytest
from scipy import integrate

from core.specfn import (
    SQRT_2_OVER_PI,
    SQRT_PI,
    erfi,
    erfi_inverse,
    gauss_hermite,
    gauss_laguerre,
    gauss_legendre01,
    graded_legendre01,
    integrated_normal_cdf,
    mills_ratio,
    normal_cdf,
    normal_pdf,
    owens_t,
    owens_t_integral,
)


class TestNormalFunctions:
    """
    Test suite for the standard normal density and distribution function.
    """

    def test_reference_values(self):
        assert normal_cdf(0.0) == 0.5, "Φ(0) should be exactly one half"
        assert abs(normal_cdf(1.0) - 0.8413447460685429) <= 1e-14, "Φ(1) differs from reference"
        assert normal_cdf(40.0) >= 1.0 - 1e-300, "Φ should saturate to 1 in the upper tail"

    def test_symmetry(self, rng):
        x = rng.uniform(-8.0, 8.0, size=500)
        np.testing.assert_allclose(normal_cdf(-x), 1.0 - normal_cdf(x), rtol=0.0, atol=1e-15)

    def test_monotone(self):
        values = normal_cdf(np.linspace(-10.0, 10.0, 2001))
        assert np.all(np.diff(values) >= 0.0), "Φ should be nondecreasing"

    def test_derivative_is_density(self, rng):
        """
        A central difference of Φ should reproduce φ at random points in [-6, 6].
        """
        x = rng.uniform(-6.0, 6.0, size=100)
        step = 1e-5
        slope = (normal_cdf(x + step) - normal_cdf(x - step)) / (2.0 * step)
        np.testing.assert_allclose(slope, normal_pdf(x), rtol=0.0, atol=1e-6)

    def test_mills_ratio_bounds(self):
        x = np.logspace(-3.0, 3.0, 200)
        ratio = mills_ratio(x)
        assert np.all(ratio > x / (x * x + 1.0)), "Mills ratio lower bound violated"
        assert np.all(ratio < 1.0 / x), "Mills ratio upper bound violated"

    def test_mills_ratio_matches_definition(self):
        x = np.linspace(-3.0, 5.0, 17)
        np.testing.assert_allclose(
            mills_ratio(x), (1.0 - normal_cdf(x)) / normal_pdf(x), rtol=1e-12
        )

    def test_integrated_cdf_against_quadrature(self):
        """∫_{-∞}^x Φ(z) dz = xΦ(x) + φ(x) at 20 points."""
        for x in np.linspace(-5.0, 3.0, 20):
            reference, _ = integrate.quad(
                lambda z: float(normal_cdf(z)), -40.0, x, epsabs=1e-13, limit=200
            )
            assert abs(integrated_normal_cdf(x) - reference) <= 1e-8, f"mismatch at x={x}"


class TestOwensT:
    """
    Test suite for Owen's T function.
    """

    def test_reference_values(self):
        assert owens_t(1.7, 0.0) == 0.0, "T(x, 0) should vanish"
        assert abs(owens_t(0.0, 1.0) - 0.125) <= 1e-15, "T(0, 1) should be 1/8"

    @pytest.mark.parametrize("x", [0.3, 1.0, 2.5])
    def test_infinite_upper_limit(self, x):
        expected = 0.5 * (1.0 - normal_cdf(abs(x)))
        assert abs(owens_t(x, math.inf) - expected) <= 1e-15
        assert abs(owens_t_integral(x, math.inf) - expected) <= 1e-10

    def test_integral_oracle_at_infinity(self, rng):
        for x in rng.uniform(-4.0, 4.0, size=100):
            expected = 0.5 * (1.0 - float(normal_cdf(abs(x))))
            assert abs(owens_t_integral(float(x), math.inf) - expected) <= 1e-10

    def test_matches_defining_integral(self, rng):
        for x, y in zip(rng.uniform(-3.0, 3.0, size=50), rng.uniform(-5.0, 5.0, size=50)):
            assert abs(owens_t(x, y) - owens_t_integral(float(x), float(y))) <= 1e-10

    def test_sign_and_symmetry(self, rng):
        x = rng.uniform(-5.0, 5.0, size=1000)
        y = rng.uniform(-5.0, 5.0, size=1000)
        value = owens_t(x, y)
        assert np.all(np.sign(value) == np.sign(y)), "sign of T should follow y"
        assert np.all(np.abs(value) <= 0.25), "|T| should not exceed 1/4"
        np.testing.assert_allclose(owens_t(-x, y), value, rtol=0.0, atol=1e-15)
        np.testing.assert_allclose(owens_t(x, -y), -value, rtol=0.0, atol=1e-15)


class TestErfi:
    """
    Test suite for the imaginary error function and its inverse.
    """

    def test_reference_values(self):
        assert erfi(0.0) == 0.0
        assert abs(erfi(1.0) - 1.6504257587975428) <= 1e-14

    def test_odd_and_increasing(self):
        x = np.linspace(-4.0, 4.0, 401)
        np.testing.assert_allclose(erfi(-x), -erfi(x), rtol=1e-15)
        assert np.all(np.diff(erfi(x)) > 0.0)

    def test_inverse_round_trip(self):
        for v in np.logspace(-4.0, 6.0, 60):
            z = erfi_inverse(float(v))
            assert abs(erfi(z) - v) <= 1e-10 * v, f"erfi(erfi_inverse({v})) drifted"

    def test_inverse_of_one(self):
        z = erfi_inverse(1.0)
        assert 0.0 < z < 1.0
        assert abs(erfi(z) - 1.0) <= 1e-12
        assert erfi_inverse(0.0) == 0.0

    @pytest.mark.parametrize("bad", [-1.0, -1e-9, math.inf, math.nan])
    def test_inverse_rejects_bad_input(self, bad):
        with pytest.raises(ValueError):
            erfi_inverse(bad)


class TestQuadratureRules:
    """
    Test suite for the Gauss rules.
    """

    def test_single_node_hermite(self):
        rule = gauss_hermite(1)
        assert rule.size == 1
        assert rule.nodes[0] == 0.0
        assert abs(rule.weights[0] - SQRT_PI) <= 1e-15

    @pytest.mark.parametrize("n", [4, 16, 64, 96])
    def test_hermite_moments(self, n):
        rule = gauss_hermite(n)
        assert abs(rule.weights.sum() - SQRT_PI) <= 1e-12, "total mass should be √π"
        assert abs(rule.integrate(lambda x: x)) <= 1e-10
        assert abs(rule.integrate(lambda x: x**2) - SQRT_PI / 2.0) <= 1e-10
        assert abs(rule.integrate(lambda x: x**4) - 3.0 * SQRT_PI / 4.0) <= 1e-10
        assert abs(rule.integrate(lambda x: x**6) - 15.0 * SQRT_PI / 8.0) <= 1e-10
        assert np.all(np.diff(rule.nodes) > 0.0)

    @pytest.mark.parametrize("n", [4, 32, 64])
    def test_legendre_moments(self, n):
        rule = gauss_legendre01(n)
        assert abs(rule.weights.sum() - 1.0) <= 1e-12, "total mass should be 1"
        for degree in range(7):
            exact = 1.0 / (degree + 1)
            assert abs(rule.integrate(lambda u: u**degree) - exact) <= 1e-10

    def test_legendre_square(self):
        assert abs(gauss_legendre01(32).integrate(np.square) - 1.0 / 3.0) <= 1e-12

    def test_graded_legendre_moments(self):
        rule = graded_legendre01(121)
        assert rule.size == 121
        assert abs(rule.weights.sum() - 1.0) <= 1e-12
        for degree in range(9):
            assert abs(rule.integrate(lambda u: u**degree) - 1.0 / (degree + 1)) <= 1e-12
        assert np.all(np.diff(rule.nodes) > 0.0)

    def test_graded_legendre_resolves_features_near_zero(self):
        rule = graded_legendre01(121)
        assert abs(rule.integrate(np.sqrt) - 2.0 / 3.0) <= 1e-9
        width = 2e-3
        expected = 1.0 - width * math.log(2.0)
        assert abs(rule.integrate(lambda u: np.tanh(u / width)) - expected) <= 1e-9

    @pytest.mark.parametrize("n, ratio", [(21, 0.25), (121, 1.0), (121, 0.0)])
    def test_graded_legendre_arguments(self, n, ratio):
        with pytest.raises(ValueError):
            graded_legendre01(n, ratio=ratio)

    def test_laguerre_moments(self):
        rule = gauss_laguerre(32)
        assert abs(rule.weights.sum() - 1.0) <= 1e-12
        assert abs(rule.integrate(lambda t: t) - 1.0) <= 1e-10
        assert abs(rule.integrate(lambda t: t**2) - 2.0) <= 1e-10

    def test_absolute_moment_is_loose(self):
        """|z| is kinked, so 64 Hermite nodes only reach about 1e-3."""
        value = gauss_hermite(64).expect_standard_normal(np.abs)
        assert abs(value - SQRT_2_OVER_PI) <= 1e-3

    @pytest.mark.parametrize("factory", [gauss_hermite, gauss_legendre01, gauss_laguerre])
    def test_rejects_empty_rule(self, factory):
        with pytest.raises(ValueError):
            factory(0)

    def test_rules_are_immutable(self):
        rule = gauss_hermite(8)
        with pytest.raises(ValueError):
            rule.nodes[0] = 1.0

    def test_normal_expectation_needs_hermite(self):
        with pytest.raises(ValueError):
            gauss_legendre01(8).expect_standard_normal(np.abs)


if __name__ == '__main__':
    pytest.main([__file__])
