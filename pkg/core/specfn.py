"""
Special Functions - Gaussian machinery shared by every numeric module

This module provides the standard normal density and distribution function,
the error and imaginary error functions, Owen's T function and the fixed
Gauss quadrature rules used for E_Z[.] style expectations.
"""

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Tuple, Union

import numpy as np
from numpy.polynomial.hermite import hermgauss
from numpy.polynomial.laguerre import laggauss
from numpy.polynomial.legendre import leggauss
from scipy import integrate, optimize, special

ArrayLike = Union[float, np.ndarray]

SQRT_2 = math.sqrt(2.0)
SQRT_PI = math.sqrt(math.pi)
SQRT_2PI = math.sqrt(2.0 * math.pi)
SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
SQRT_PI_OVER_2 = math.sqrt(math.pi / 2.0)
LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

DEFAULT_HERMITE_NODES = 96
DEFAULT_LEGENDRE_NODES = 64
DEFAULT_LAGUERRE_NODES = 64
DEFAULT_GRADED_NODES = 121
GRADED_PANELS = 10
GRADED_RATIO = 0.25
ERFI_INVERSE_MAX_ITER = 200


def broadcast_inputs(*values: ArrayLike) -> Tuple[bool, Tuple[np.ndarray, ...]]:
    """
    Broadcast inputs to float arrays of at least one dimension.

    :return: (all inputs were scalars, broadcast arrays)
    """
    scalar = all(np.ndim(value) == 0 for value in values)
    arrays = np.broadcast_arrays(*(np.atleast_1d(np.asarray(v, dtype=float)) for v in values))
    return scalar, tuple(np.array(a) for a in arrays)


def restore_shape(values: np.ndarray, scalar: bool) -> ArrayLike:
    return float(values.reshape(-1)[0]) if scalar else values


def normal_pdf(x: ArrayLike) -> ArrayLike:
    """Standard normal density φ."""
    return np.exp(-0.5 * np.square(x)) / SQRT_2PI


def log_normal_pdf(x: ArrayLike) -> ArrayLike:
    return -0.5 * np.square(x) - LOG_SQRT_2PI


def normal_cdf(x: ArrayLike) -> ArrayLike:
    """
    Standard normal distribution function Φ.

    :param x: Point(s) of evaluation
    :return: Φ(x) in (0, 1), saturating to 0 or 1 in the far tails
    """
    return special.ndtr(x)


def log_normal_cdf(x: ArrayLike) -> ArrayLike:
    return special.log_ndtr(x)


def mills_ratio(x: ArrayLike) -> ArrayLike:
    """
    Mills ratio (1 - Φ(x)) / φ(x), computed through the scaled complementary
    error function so that neither tail overflows.

    :param x: Point(s) of evaluation
    :return: Mills ratio, positive everywhere
    """
    return SQRT_PI_OVER_2 * special.erfcx(np.asarray(x, dtype=float) / SQRT_2)


def integrated_normal_cdf(x: ArrayLike) -> ArrayLike:
    """Antiderivative of Φ vanishing at -∞: xΦ(x) + φ(x)."""
    return x * normal_cdf(x) + normal_pdf(x)


def erf(x: ArrayLike) -> ArrayLike:
    return special.erf(x)


def erfi(x: ArrayLike) -> ArrayLike:
    """Imaginary error function 2/√π ∫₀ˣ exp(z²) dz."""
    return special.erfi(x)


def erfi_inverse(v: float) -> float:
    """
    Inverse of erfi on [0, ∞).

    The bracket doubles until it encloses v, then bisection runs to machine
    precision under a fixed iteration cap.

    :param v: Nonnegative target value
    :return: z ≥ 0 with erfi(z) = v
    :raises ValueError: If v is negative or not finite
    """
    if not math.isfinite(v) or v < 0.0:
        raise ValueError(f"erfi_inverse requires a finite v >= 0, got {v}")
    if v == 0.0:
        return 0.0

    upper = 1.0
    while special.erfi(upper) < v:
        upper *= 2.0

    return float(
        optimize.bisect(
            lambda z: special.erfi(z) - v,
            0.0,
            upper,
            xtol=1e-15,
            rtol=4.0 * np.finfo(float).eps,
            maxiter=ERFI_INVERSE_MAX_ITER,
        )
    )


def owens_t(x: ArrayLike, y: ArrayLike) -> ArrayLike:
    """
    Owen's T function T(x, y) = 1/(2π) ∫₀ʸ exp(-x²(1+z²)/2) / (1+z²) dz.

    An infinite y is closed with T(x, ±∞) = ±½[1 - Φ(|x|)].

    :param x: First argument
    :param y: Upper limit, may be ±inf
    :return: T(x, y)
    """
    scalar, (xs, ys) = broadcast_inputs(x, y)
    out = np.empty(xs.shape)
    infinite = np.isinf(ys)
    finite = ~infinite
    out[finite] = special.owens_t(xs[finite], ys[finite])
    out[infinite] = np.sign(ys[infinite]) * 0.5 * normal_cdf(-np.abs(xs[infinite]))
    return restore_shape(out, scalar)


def owens_t_integral(x: float, y: float) -> float:
    """
    Owen's T by adaptive integration of its defining integrand.

    :param x: First argument
    :param y: Upper limit, may be ±inf
    :return: T(x, y)
    """
    if y == 0.0:
        return 0.0

    def integrand(z: float) -> float:
        return math.exp(-0.5 * x * x * (1.0 + z * z)) / (1.0 + z * z)

    value, _ = integrate.quad(integrand, 0.0, abs(y), epsabs=1e-14, epsrel=1e-13, limit=200)
    return math.copysign(value / (2.0 * math.pi), y)


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """
    Immutable Gauss rule.

    kind is one of:
      - 'hermite': weight exp(-x²) on the real line, total mass √π
      - 'legendre01': unit weight on [0, 1], total mass 1
      - 'laguerre': weight exp(-x) on [0, ∞), total mass 1
    """

    nodes: np.ndarray
    weights: np.ndarray
    kind: str

    def __post_init__(self) -> None:
        if self.nodes.shape != self.weights.shape or self.nodes.ndim != 1:
            raise ValueError("nodes and weights must be 1-D arrays of equal length")
        if np.any(self.weights <= 0.0):
            raise ValueError(f"{self.kind} rule has non-positive weights")
        if np.any(np.diff(self.nodes) <= 0.0):
            raise ValueError(f"{self.kind} rule nodes are not strictly increasing")
        self.nodes.setflags(write=False)
        self.weights.setflags(write=False)

    @property
    def size(self) -> int:
        return int(self.nodes.size)

    def integrate(self, fn: Callable[[np.ndarray], np.ndarray]) -> float:
        """Weighted sum Σ wᵢ fn(xᵢ) under the rule's own weight function."""
        return float(np.dot(self.weights, fn(self.nodes)))

    def standard_normal_points(self) -> np.ndarray:
        """Hermite nodes mapped to abscissae of the standard normal measure."""
        self._require("hermite")
        return SQRT_2 * self.nodes

    def standard_normal_weights(self) -> np.ndarray:
        self._require("hermite")
        return self.weights / SQRT_PI

    def expect_standard_normal(self, fn: Callable[[np.ndarray], np.ndarray]) -> float:
        """
        Approximate E[fn(Z)] for Z ~ N(0, 1).

        :param fn: Vectorized integrand
        :return: Quadrature estimate
        """
        return float(np.dot(self.standard_normal_weights(), fn(self.standard_normal_points())))

    def _require(self, kind: str) -> None:
        if self.kind != kind:
            raise ValueError(f"operation needs a {kind} rule, this one is {self.kind}")


def _check_size(n: int) -> None:
    if n < 1:
        raise ValueError(f"quadrature rule needs at least one node, got n={n}")


@lru_cache(maxsize=32)
def gauss_hermite(n: int = DEFAULT_HERMITE_NODES) -> QuadratureRule:
    """
    Gauss-Hermite rule for ∫ f(x) exp(-x²) dx.

    :param n: Number of nodes, at least 1
    :return: Rule exact for polynomials of degree ≤ 2n-1
    """
    _check_size(n)
    nodes, weights = hermgauss(n)
    return QuadratureRule(
        np.asarray(nodes, dtype=float), np.asarray(weights, dtype=float), "hermite"
    )


@lru_cache(maxsize=32)
def gauss_legendre01(n: int = DEFAULT_LEGENDRE_NODES) -> QuadratureRule:
    """
    Gauss-Legendre rule mapped from [-1, 1] to [0, 1].

    :param n: Number of nodes, at least 1
    :return: Rule exact for polynomials of degree ≤ 2n-1
    """
    _check_size(n)
    nodes, weights = leggauss(n)
    return QuadratureRule(0.5 * (nodes + 1.0), 0.5 * weights, "legendre01")


@lru_cache(maxsize=8)
def graded_legendre01(
    n: int = DEFAULT_GRADED_NODES, panels: int = GRADED_PANELS, ratio: float = GRADED_RATIO
) -> QuadratureRule:
    """
    Composite Gauss-Legendre rule on [0, 1] whose panels shrink geometrically
    toward 0, with edges 0, ratio^panels, ..., ratio, 1.

    Integrands that change on an unknown small scale near 0 see a panel of
    comparable width wherever that scale falls.

    :param n: Total number of nodes, split evenly over the panels plus the
        innermost [0, ratio^panels]
    :param panels: Number of geometric panels
    :param ratio: Width ratio of neighbouring panels, in (0, 1)
    :return: Rule of kind 'legendre01'
    :raises ValueError: If fewer than two nodes fall on each panel
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"graded rule needs a panel ratio in (0, 1), got {ratio}")
    per_panel = n // (panels + 1)
    if per_panel < 2:
        raise ValueError(f"graded rule needs at least {2 * (panels + 1)} nodes, got n={n}")
    edges = np.concatenate(([0.0], ratio ** np.arange(panels, -1, -1, dtype=float)))
    lower, width = edges[:-1, np.newaxis], np.diff(edges)[:, np.newaxis]
    base = gauss_legendre01(per_panel)
    return QuadratureRule(
        (lower + width * base.nodes).reshape(-1), (width * base.weights).reshape(-1), "legendre01"
    )


@lru_cache(maxsize=8)
def gauss_laguerre(n: int = DEFAULT_LAGUERRE_NODES) -> QuadratureRule:
    """Gauss-Laguerre rule for ∫₀^∞ f(τ) exp(-τ) dτ."""
    _check_size(n)
    nodes, weights = laggauss(n)
    return QuadratureRule(
        np.asarray(nodes, dtype=float), np.asarray(weights, dtype=float), "laguerre"
    )
