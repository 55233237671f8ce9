"""
Stein Equation Solutions - the bounded solution f of
    σ² f'(x) - (x - μ) f(x) = h(x) - E_Z[h(μ + σZ)]

Evaluation goes through the Ornstein-Uhlenbeck representation in general and
through closed forms for the absolute-value and Huber targets. The
density-ratio representation is kept as an oracle, together with checkers for
the sup-norm bounds on f, f' and f''.
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
import structlog
from scipy import integrate

from core.specfn import (
    SQRT_2_OVER_PI,
    ArrayLike,
    DEFAULT_GRADED_NODES,
    DEFAULT_HERMITE_NODES,
    broadcast_inputs,
    restore_shape,
    gauss_hermite,
    graded_legendre01,
    integrated_normal_cdf,
    log_normal_cdf,
    log_normal_pdf,
    mills_ratio,
    normal_pdf,
)
from core.targets import TargetFunction, TargetKind

logger = structlog.get_logger(__name__)

# Density-ratio oracle is only conditioned inside this many standard deviations
DENSITY_RATIO_WINDOW = 6.0


@dataclass(frozen=True)
class SteinSolution:
    """
    Handle on f_{μ,σ,h}.

    :param mu: Center of the reference normal
    :param sigma: Scale of the reference normal, positive
    :param target: The target h
    :param expectation: Cached E_Z[h(μ + σZ)]
    """

    mu: float
    sigma: float
    target: TargetFunction
    expectation: float
    hermite_nodes: int = DEFAULT_HERMITE_NODES
    legendre_nodes: int = DEFAULT_GRADED_NODES

    def evaluate(self, x: ArrayLike, method: str = "auto") -> ArrayLike:
        """
        Evaluate f at x.

        :param x: Point(s) of evaluation
        :param method: 'auto' (closed form when available), 'ou' or 'density'
        :return: f(x)
        """
        if method == "ou":
            return eval_ou(self, x)
        if method == "density":
            scalar, (xs,) = broadcast_inputs(x)
            return restore_shape(np.array([eval_density_ratio(self, float(v)) for v in xs]), scalar)
        if method != "auto":
            raise ValueError(f"unknown evaluation method '{method}'")

        if self.target.kind is TargetKind.ABS:
            return eval_closed_abs(self, x)
        if self.target.kind is TargetKind.HUBER:
            return eval_closed_huber(self, x)
        return eval_ou(self, x)

    def derivative(self, x: ArrayLike) -> ArrayLike:
        """
        f'(x) read off the Stein equation.

        :param x: Point(s) of evaluation
        :return: [(x - μ) f(x) + h(x) - E] / σ²
        """
        xs = np.asarray(x, dtype=float)
        numerator = (xs - self.mu) * self.evaluate(xs) + self.target.evaluate(xs) - self.expectation
        value = numerator / self.sigma**2
        return float(value) if np.ndim(value) == 0 else value


def solve(
    mu: float,
    sigma: float,
    h: TargetFunction,
    hermite_nodes: int = DEFAULT_HERMITE_NODES,
    legendre_nodes: int = DEFAULT_GRADED_NODES,
) -> SteinSolution:
    """
    Build the solution handle for (μ, σ, h).

    :param mu: Center
    :param sigma: Positive scale
    :param h: Target
    :return: SteinSolution with its Gaussian expectation cached
    :raises ValueError: If sigma is not positive
    """
    if not sigma > 0.0 or not math.isfinite(sigma):
        raise ValueError(f"Stein solution needs a positive finite sigma, got {sigma}")
    expectation = h.gaussian_expectation(mu, sigma, gauss_hermite(hermite_nodes))
    return SteinSolution(mu, sigma, h, expectation, hermite_nodes, legendre_nodes)


def _with_fallback(
    sol: SteinSolution, xs: np.ndarray, values: np.ndarray, scalar: bool
) -> ArrayLike:
    # Density ratios can overflow far from μ; the OU form stays bounded there
    bad = ~np.isfinite(values)
    if np.any(bad):
        logger.debug("closed form not finite, using OU representation", points=int(bad.sum()))
        values[bad] = np.atleast_1d(eval_ou(sol, xs[bad]))
    return restore_shape(values, scalar)


def eval_closed_abs(sol: SteinSolution, x: ArrayLike) -> ArrayLike:
    """
    Closed form of f for h(x) = |x|.

    Uses μ + E|μ+σZ| = 2σG(μ/σ) and E|μ+σZ| - μ = 2σG(-μ/σ), with G the
    integrated normal CDF, and Φ/φ ratios written as Mills ratios. The point
    x = 0 takes the left branch.

    :param sol: Solution for the Abs target
    :param x: Point(s) of evaluation
    :return: f(x)
    """
    if sol.target.kind is not TargetKind.ABS:
        raise ValueError(f"eval_closed_abs needs an abs target, got {sol.target.name}")
    scalar, (xs,) = broadcast_inputs(x)
    z = (xs - sol.mu) / sol.sigma
    zeta = sol.mu / sol.sigma

    with np.errstate(over="ignore", invalid="ignore"):
        left = 1.0 - 2.0 * integrated_normal_cdf(zeta) * mills_ratio(-z)
        right = -1.0 + 2.0 * integrated_normal_cdf(-zeta) * mills_ratio(z)
        values = np.where(xs <= 0.0, left, right)
    return _with_fallback(sol, xs, values, scalar)


def eval_closed_huber(sol: SteinSolution, x: ArrayLike) -> ArrayLike:
    """
    Closed form of f for the Huber target, split at ±1/k.

    :param sol: Solution for a Huber target
    :param x: Point(s) of evaluation
    :return: f(x)
    """
    if sol.target.kind is not TargetKind.HUBER:
        raise ValueError(f"eval_closed_huber needs a huber target, got {sol.target.name}")
    scalar, (xs,) = broadcast_inputs(x)
    k = sol.target.scale_value
    width = 1.0 / k
    mu, sigma = sol.mu, sol.sigma
    expectation = sol.expectation - sol.target.offset
    z = (xs - mu) / sigma
    z_edge = (-width - mu) / sigma

    with np.errstate(over="ignore", invalid="ignore"):
        left = 1.0 - (mu + expectation + 0.5 * width) / sigma * mills_ratio(-z)
        right = -1.0 - (mu - expectation - 0.5 * width) / sigma * mills_ratio(z)

        quadratic = k * (mu * mu + sigma * sigma)
        middle = (
            (quadratic - 2.0 * expectation) * mills_ratio(-z) / (2.0 * sigma)
            - 0.5 * k * (xs + mu)
            - (quadratic + 2.0 * mu + width)
            * np.exp(log_normal_cdf(z_edge) - log_normal_pdf(z))
            / (2.0 * sigma)
            + 0.5 * (1.0 + k * mu) * np.exp(log_normal_pdf(z_edge) - log_normal_pdf(z))
        )
        values = np.where(xs < -width, left, np.where(xs > width, right, middle))
    return _with_fallback(sol, xs, values, scalar)


def eval_ou(sol: SteinSolution, x: ArrayLike) -> ArrayLike:
    """
    OU-semigroup representation
        f(x) = -∫₀¹ E_Z[h'(μ + w(x-μ) + σ√(1-w²) Z)] dw,
    integrated after w = 1 - q² on a rule graded toward q = 0. The inner
    scale vanishes like q there, and a kink of h at distance d from x turns
    the integrand over near q ≈ d/σ, so every such scale meets a panel of its
    own width.

    :param sol: Any solution
    :param x: Point(s) of evaluation
    :return: f(x)
    """
    scalar, (xs,) = broadcast_inputs(x)
    rule = graded_legendre01(sol.legendre_nodes)
    q = rule.nodes
    w = 1.0 - np.square(q)
    jacobian = 2.0 * q * rule.weights

    centers = sol.mu + w[np.newaxis, :] * (xs[:, np.newaxis] - sol.mu)
    scales = sol.sigma * (q * np.sqrt(2.0 - np.square(q)))[np.newaxis, :]
    inner = sol.target.derivative_expectation(centers, scales, gauss_hermite(sol.hermite_nodes))
    return restore_shape(-(np.asarray(inner) @ jacobian), scalar)


def eval_density_ratio(sol: SteinSolution, x: float) -> float:
    """
    Density-ratio representation
        f(x) = ∫_{-∞}^{z} (h(μ+σζ) - E) φ(ζ) dζ / (σ φ(z)),  z = (x-μ)/σ,
    integrated over the shorter tail. Only valid for |z| ≤ 6.

    :param sol: Any solution
    :param x: Point of evaluation
    :return: f(x)
    :raises ValueError: Outside the conditioned window
    """
    z = (x - sol.mu) / sol.sigma
    if abs(z) > DENSITY_RATIO_WINDOW:
        raise ValueError(f"density-ratio form is ill-conditioned at |x-mu|/sigma = {abs(z):.3g}")

    def integrand(zeta: float) -> float:
        return (float(sol.target.evaluate(sol.mu + sol.sigma * zeta)) - sol.expectation) * float(
            normal_pdf(zeta)
        )

    kinks = [(kink - sol.mu) / sol.sigma for kink in sol.target.kinks]
    if z <= 0.0:
        lo, hi, sign = -40.0, z, 1.0
    else:
        lo, hi, sign = z, 40.0, -1.0
    breaks = [b for b in kinks if lo < b < hi]
    value, _ = integrate.quad(
        integrand, lo, hi, points=breaks or None, epsabs=1e-14, epsrel=1e-12, limit=400
    )
    return float(sign * value / (sol.sigma * normal_pdf(z)))


def equation_residual(sol: SteinSolution, x: ArrayLike, step: float = 1e-5) -> ArrayLike:
    """
    σ² f'(x) - (x-μ) f(x) - [h(x) - E], with f' by central difference.

    :param sol: Any solution
    :param x: Point(s) away from the kinks of h
    :param step: Finite-difference step
    :return: Residual(s)
    """
    scalar, (xs,) = broadcast_inputs(x)
    f = np.asarray(sol.evaluate(xs))
    ahead = np.asarray(sol.evaluate(xs + step))
    slope = (ahead - np.asarray(sol.evaluate(xs - step))) / (2.0 * step)
    residual = (
        sol.sigma**2 * slope
        - (xs - sol.mu) * f
        - (np.asarray(sol.target.evaluate(xs)) - sol.expectation)
    )
    return restore_shape(residual, scalar)


@dataclass
class SteinFactorReport:
    """Finite-difference sup-norm estimates against the Stein factor bounds."""

    points: int
    sup_f: float
    sup_fprime: float
    sup_fsecond: float
    max_fprime: float
    fprime_bound: float
    fsecond_bound: float
    f_ok: bool
    fprime_ok: bool
    fsecond_ok: bool
    monotone_ok: Optional[bool]
    excluded: List[float] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.f_ok and self.fprime_ok and self.fsecond_ok and self.monotone_ok is not False


def check_stein_factors(
    sol: SteinSolution,
    grid: Sequence[float],
    slope_step: float = 1e-5,
    curvature_step: float = 1e-3,
    kink_exclusion: float = 1e-3,
    fprime_tol: float = 1e-4,
    fsecond_tol: float = 1e-2,
    monotone_tol: float = 1e-8,
) -> SteinFactorReport:
    """
    Check |f| ≤ 1, |f'| ≤ √(2/π)/σ and |f''| ≤ 2/σ² on a grid, plus f' ≤ 0
    for convex targets.

    Second differences skip points within kink_exclusion (plus the stencil
    width) of a kink of h, where f'' jumps.

    :param sol: Solution to check
    :param grid: Nonempty evaluation points
    :return: SteinFactorReport
    """
    xs = np.asarray(grid, dtype=float)
    if xs.size == 0:
        raise ValueError("check_stein_factors needs a nonempty grid")

    f = np.asarray(sol.evaluate(xs))
    ahead = np.asarray(sol.evaluate(xs + slope_step))
    fprime = (ahead - np.asarray(sol.evaluate(xs - slope_step))) / (2.0 * slope_step)

    near_kink = np.zeros(xs.shape, dtype=bool)
    for kink in sol.target.kinks:
        near_kink |= np.abs(xs - kink) <= kink_exclusion + curvature_step
    smooth = xs[~near_kink]
    if smooth.size:
        fsecond = (
            np.asarray(sol.evaluate(smooth + curvature_step))
            - 2.0 * np.asarray(sol.evaluate(smooth))
            + np.asarray(sol.evaluate(smooth - curvature_step))
        ) / curvature_step**2
        sup_fsecond = float(np.max(np.abs(fsecond)))
    else:
        sup_fsecond = 0.0

    fprime_bound = SQRT_2_OVER_PI / sol.sigma
    fsecond_bound = 2.0 / sol.sigma**2
    max_fprime = float(np.max(fprime))
    return SteinFactorReport(
        points=int(xs.size),
        sup_f=float(np.max(np.abs(f))),
        sup_fprime=float(np.max(np.abs(fprime))),
        sup_fsecond=sup_fsecond,
        max_fprime=max_fprime,
        fprime_bound=fprime_bound,
        fsecond_bound=fsecond_bound,
        f_ok=bool(np.max(np.abs(f)) <= 1.0 + 1e-12),
        fprime_ok=bool(np.max(np.abs(fprime)) <= fprime_bound + fprime_tol),
        fsecond_ok=sup_fsecond <= fsecond_bound + fsecond_tol,
        monotone_ok=(max_fprime <= monotone_tol) if sol.target.convex else None,
        excluded=[float(v) for v in xs[near_kink]],
    )
