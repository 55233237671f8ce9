import math

import numpy as np
import pytest

from core.specfn import SQRT_2_OVER_PI, gauss_hermite, mills_ratio
from core.stein import (
    DENSITY_RATIO_WINDOW,
    check_stein_factors,
    equation_residual,
    eval_closed_abs,
    eval_closed_huber,
    eval_density_ratio,
    eval_ou,
    solve,
)
from core.targets import (
    abs_target,
    custom_target,
    huber_target,
    logcosh_target,
    soft_threshold_target,
)

ALL_TARGETS = [
    abs_target(),
    huber_target(1.0),
    huber_target(2.5),
    logcosh_target(1.0),
    logcosh_target(2.0),
    logcosh_target(5.0),
    soft_threshold_target(1.5),
    soft_threshold_target(2.0),
]


def _away_from_kinks(h, x, margin=1e-3):
    keep = np.ones(x.shape, dtype=bool)
    for kink in h.kinks:
        keep &= np.abs(x - kink) > margin
    return x[keep]


class TestClosedForms:
    """
    Test suite for the closed-form solutions of the absolute-value and Huber targets.
    """

    def test_absolute_value_at_center(self):
        assert abs(solve(0.0, 1.0, abs_target()).evaluate(0.0)) <= 1e-12

    def test_absolute_value_left_tail(self):
        value = solve(0.0, 1.0, abs_target()).evaluate(-10.0)
        assert abs(value - (1.0 - SQRT_2_OVER_PI * mills_ratio(10.0))) <= 1e-12
        assert abs(value - (1.0 - SQRT_2_OVER_PI / 10.0)) <= 1e-3

    @pytest.mark.parametrize("x", [-3.0, -1.0, 0.5, 2.0])
    def test_absolute_value_matches_ou(self, x):
        sol = solve(0.0, 1.0, abs_target())
        assert abs(eval_closed_abs(sol, x) - eval_ou(sol, x)) <= 1e-6

    def test_absolute_value_representations_agree(self, rng):
        for _ in range(25):
            mu = float(rng.uniform(-2.0, 2.0))
            sigma = float(rng.uniform(0.5, 2.0))
            x = float(mu + sigma * rng.uniform(-4.0, 4.0))
            sol = solve(mu, sigma, abs_target())
            closed = sol.evaluate(x)
            assert abs(closed - sol.evaluate(x, method="ou")) <= 1e-6
            assert abs(closed - sol.evaluate(x, method="density")) <= 1e-6

    @pytest.mark.parametrize("x", [-2.0, 2.0, 5.0])
    def test_huber_representations_agree(self, x):
        sol = solve(2.0, 3.0, huber_target(1.0))
        closed = eval_closed_huber(sol, x)
        assert abs(closed - eval_ou(sol, x)) <= 1e-6
        assert abs(closed - eval_density_ratio(sol, x)) <= 1e-6

    def test_huber_symmetric_center(self):
        assert abs(solve(0.0, 1.0, huber_target(1.0)).evaluate(0.0)) <= 1e-9

    @pytest.mark.parametrize("k", [0.5, 2.0])
    def test_huber_continuous_at_edges(self, k):
        sol = solve(0.4, 1.3, huber_target(k))
        for edge in (-1.0 / k, 1.0 / k):
            inside = sol.evaluate(edge - 1e-10 * np.sign(edge))
            outside = sol.evaluate(edge + 1e-10 * np.sign(edge))
            assert abs(inside - outside) <= 1e-8, f"jump at {edge}"

    def test_steep_huber_approaches_absolute_value(self):
        x = np.array([-2.0, -0.5, 0.7, 3.0])
        steep = solve(0.3, 1.0, huber_target(1e5)).evaluate(x)
        absolute = solve(0.3, 1.0, abs_target()).evaluate(x)
        np.testing.assert_allclose(steep, absolute, rtol=0.0, atol=1e-3)

    def test_closed_forms_reject_other_targets(self):
        sol = solve(0.0, 1.0, logcosh_target(1.0))
        with pytest.raises(ValueError):
            eval_closed_abs(sol, 0.5)
        with pytest.raises(ValueError):
            eval_closed_huber(sol, 0.5)


class TestSteinEquation:
    """
    Test suite for the defining equation and the sup-norm bounds.
    """

    @pytest.mark.parametrize("h", ALL_TARGETS, ids=[h.name for h in ALL_TARGETS])
    def test_residual_vanishes(self, h, rng):
        mu = float(rng.uniform(-2.0, 2.0))
        sigma = float(rng.uniform(0.5, 2.0))
        sol = solve(mu, sigma, h)
        x = _away_from_kinks(h, mu + sigma * rng.uniform(-4.0, 4.0, size=50), margin=2e-3)
        residual = np.asarray(equation_residual(sol, x, step=1e-4))
        assert np.max(np.abs(residual)) <= 1e-5

    @pytest.mark.parametrize("offset", [-0.4, -2e-3, 2e-3, 0.05, 0.4])
    def test_ou_resolves_points_near_kinks(self, offset):
        h = soft_threshold_target(1.5)
        sol = solve(0.3, 1.2, h)
        for kink in h.kinks:
            x = kink + offset
            assert abs(eval_ou(sol, x) - eval_density_ratio(sol, x)) <= 1e-7, f"x={x}"

    def test_wide_logcosh_residual(self):
        h = logcosh_target(5.0)
        sol = solve(0.5, 3.0, h)
        x = np.array([-6.0, -1.0, -0.05, 0.0, 0.02, 0.7, 4.0, 9.0])
        residual = np.asarray(equation_residual(sol, x, step=1e-4))
        assert np.max(np.abs(residual)) <= 1e-5
        for point in (-1.0, 0.02, 4.0):
            assert abs(sol.evaluate(point) - eval_density_ratio(sol, point)) <= 1e-8

    def test_gaussian_integration_by_parts(self):
        """σ² E[g'(X)] = E[(X - μ) g(X)] for X ~ N(μ, σ²)."""
        rule = gauss_hermite(96)
        for mu, sigma in [(0.0, 1.0), (0.8, 0.4), (-1.5, 2.2)]:
            lhs = sigma**2 * rule.expect_standard_normal(lambda z: np.cos(mu + sigma * z))
            rhs = rule.expect_standard_normal(lambda z: sigma * z * np.sin(mu + sigma * z))
            assert abs(lhs - rhs) <= 1e-8

    @pytest.mark.parametrize(
        "mu, sigma, h", [(0.0, 1.0, abs_target()), (3.0, 0.5, huber_target(2.0))]
    )
    def test_stein_factor_bounds(self, mu, sigma, h):
        grid = np.linspace(mu - 8.0 * sigma, mu + 8.0 * sigma, 400)
        report = check_stein_factors(solve(mu, sigma, h), grid)
        assert report.f_ok, f"sup|f| = {report.sup_f}"
        assert report.fprime_ok, f"sup|f'| = {report.sup_fprime} > {report.fprime_bound}"
        assert report.fsecond_ok, f"sup|f''| = {report.sup_fsecond} > {report.fsecond_bound}"
        assert report.monotone_ok, f"max f' = {report.max_fprime}"
        assert report.ok

    def test_stein_factor_grid_must_be_nonempty(self):
        with pytest.raises(ValueError):
            check_stein_factors(solve(0.0, 1.0, abs_target()), [])

    def test_bounded_by_one(self, rng):
        for h in ALL_TARGETS:
            sol = solve(float(rng.uniform(-1.0, 1.0)), float(rng.uniform(0.3, 3.0)), h)
            values = np.asarray(sol.evaluate(np.linspace(-15.0, 15.0, 301)))
            assert np.all(np.abs(values) <= 1.0 + 1e-12), h.name

    def test_vertical_shift_leaves_solution_unchanged(self):
        x = np.linspace(-4.0, 4.0, 33)
        for h in ALL_TARGETS:
            base = solve(0.5, 1.5, h)
            shifted = solve(0.5, 1.5, h.shifted(5.0))
            np.testing.assert_array_equal(eval_ou(base, x), eval_ou(shifted, x))
            np.testing.assert_allclose(base.evaluate(x), shifted.evaluate(x), rtol=0.0, atol=1e-9)

    def test_nonconvex_target(self):
        sine = custom_target(np.sin, np.cos, convex=False)
        sol = solve(0.2, 1.0, sine)
        x = np.linspace(-3.0, 3.0, 25)
        assert np.max(np.abs(np.asarray(equation_residual(sol, x, step=1e-4)))) <= 1e-5
        assert abs(sol.evaluate(0.7, method="density") - sol.evaluate(0.7)) <= 1e-6


class TestSolveArguments:
    """
    Test suite for argument validation.
    """

    @pytest.mark.parametrize("sigma", [0.0, -1.0, math.inf, math.nan])
    def test_sigma_must_be_positive(self, sigma):
        with pytest.raises(ValueError):
            solve(0.0, sigma, abs_target())

    def test_density_ratio_window(self):
        sol = solve(0.0, 1.0, abs_target())
        with pytest.raises(ValueError):
            eval_density_ratio(sol, DENSITY_RATIO_WINDOW + 0.5)

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            solve(0.0, 1.0, abs_target()).evaluate(0.0, method="series")

    def test_derivative_reads_equation(self):
        sol = solve(0.0, 1.0, abs_target())
        slope = (sol.evaluate(1.0 + 1e-6) - sol.evaluate(1.0 - 1e-6)) / 2e-6
        assert abs(sol.derivative(1.0) - slope) <= 1e-7


if __name__ == '__main__':
    pytest.main([__file__])
