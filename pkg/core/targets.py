"""
Target Functions - the convex 1-Lipschitz potentials that parameterize the learner

Each target bundles its value, a fixed subgradient, the convex conjugate at -u,
and Gaussian expectations of both h and h'. Closed forms are used where they
exist. LogCosh writes log cosh(ηx)/η as |x| plus a correction that decays on
the 1/η scale, so only that correction is integrated numerically. Custom
targets go through adaptive quadrature split at their kinks.
"""

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy import integrate, special

from core.specfn import (
    ArrayLike,
    DEFAULT_HERMITE_NODES,
    DEFAULT_LAGUERRE_NODES,
    QuadratureRule,
    gauss_hermite,
    gauss_laguerre,
    normal_cdf,
    normal_pdf,
)

# Scales below this are treated as a point mass
DEGENERATE_SCALE = 1e-12
# LogCosh expectations switch from Gauss-Hermite to the Laguerre split above this eta·sigma
LOGCOSH_HERMITE_SPREAD = 1.0
LOG_2 = math.log(2.0)


class TargetKind(str, Enum):
    ABS = "abs"
    HUBER = "huber"
    LOGCOSH = "logcosh"
    SOFT_THRESHOLD = "softthr"
    CUSTOM = "custom"


@dataclass(frozen=True)
class TargetFunction:
    """
    Immutable description of a target h.

    :param kind: Family of the target
    :param scale: k for Huber, eta for LogCosh and SoftThreshold, unused otherwise
    :param convex: Whether the main (convex) bound applies
    :param offset: Vertical shift added to h; h' is unaffected
    :param value_fn: Vectorized h for the Custom kind
    :param derivative_fn: Vectorized h' for the Custom kind
    :param custom_kinks: Points where a Custom h' or h'' jumps
    """

    kind: TargetKind
    scale: Optional[float] = None
    convex: bool = True
    offset: float = 0.0
    value_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    derivative_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    custom_kinks: Tuple[float, ...] = ()
    lipschitz_constant: float = 1.0

    def __post_init__(self) -> None:
        if self.kind in (TargetKind.HUBER, TargetKind.LOGCOSH, TargetKind.SOFT_THRESHOLD):
            if self.scale is None or not self.scale > 0.0 or not math.isfinite(self.scale):
                raise ValueError(f"{self.kind.value} target needs a positive finite scale")
        if self.kind is TargetKind.CUSTOM and (self.value_fn is None or self.derivative_fn is None):
            raise ValueError("custom target needs both value_fn and derivative_fn")

    @property
    def name(self) -> str:
        if self.scale is None:
            return self.kind.value
        return f"{self.kind.value}({self.scale:g})"

    @property
    def scale_value(self) -> float:
        if self.scale is None:
            raise ValueError(f"{self.kind.value} target has no scale")
        return float(self.scale)

    @property
    def is_even(self) -> bool:
        return self.kind is not TargetKind.CUSTOM

    @property
    def kinks(self) -> Tuple[float, ...]:
        """Points where h' or h'' is discontinuous."""
        if self.kind is TargetKind.ABS:
            return (0.0,)
        if self.kind in (TargetKind.HUBER, TargetKind.SOFT_THRESHOLD):
            width = 1.0 / self.scale_value
            return (-width, width)
        if self.kind is TargetKind.CUSTOM:
            return tuple(sorted(self.custom_kinks))
        return ()

    def shifted(self, amount: float) -> "TargetFunction":
        """Return h + amount."""
        return replace(self, offset=self.offset + amount)

    def evaluate(self, x: ArrayLike) -> ArrayLike:
        """
        Evaluate h(x).

        :param x: Point(s) of evaluation
        :return: h(x)
        """
        x = np.asarray(x, dtype=float)
        if self.kind is TargetKind.ABS:
            value = np.abs(x)
        elif self.kind is TargetKind.HUBER:
            k = self.scale_value
            ax = np.abs(x)
            value = np.where(ax <= 1.0 / k, 0.5 * k * np.square(x), ax - 0.5 / k)
        elif self.kind is TargetKind.LOGCOSH:
            eta = self.scale_value
            ax = np.abs(x)
            # ln cosh(ηx)/η without overflow
            value = ax + (np.log1p(np.exp(-2.0 * eta * ax)) - math.log(2.0)) / eta
        elif self.kind is TargetKind.SOFT_THRESHOLD:
            value = np.maximum(np.abs(x) - 1.0 / self.scale_value, 0.0)
        else:
            value = np.asarray(self.value_fn(x), dtype=float)  # type: ignore[misc]
        result = value + self.offset
        return float(result) if result.ndim == 0 else result

    def derivative(self, x: ArrayLike) -> ArrayLike:
        """
        Fixed member of the subdifferential of h.

        Kinks take the convention h'(0) = 0 for Abs and
        h'(x) = sign(x)·1[|x| > 1/η] for SoftThreshold.

        :param x: Point(s) of evaluation
        :return: h'(x), bounded by 1 in absolute value
        """
        x = np.asarray(x, dtype=float)
        if self.kind is TargetKind.ABS:
            value = np.sign(x)
        elif self.kind is TargetKind.HUBER:
            value = np.clip(self.scale_value * x, -1.0, 1.0)
        elif self.kind is TargetKind.LOGCOSH:
            value = np.tanh(self.scale_value * x)
        elif self.kind is TargetKind.SOFT_THRESHOLD:
            value = np.where(np.abs(x) > 1.0 / self.scale_value, np.sign(x), 0.0)
        else:
            value = np.asarray(self.derivative_fn(x), dtype=float)  # type: ignore[misc]
        return float(value) if value.ndim == 0 else value

    def conjugate_at_neg(self, u: float) -> float:
        """
        Convex conjugate at -u, h*(-u) = sup_x(-u·x - h(x)).

        :param u: Comparator in [-1, 1]
        :return: h*(-u)
        :raises ValueError: If |u| > 1
        """
        if not -1.0 <= u <= 1.0:
            raise ValueError(f"conjugate_at_neg needs u in [-1, 1], got {u}")

        if self.kind is TargetKind.ABS:
            value = 0.0
        elif self.kind is TargetKind.HUBER:
            value = u * u / (2.0 * self.scale_value)
        elif self.kind is TargetKind.LOGCOSH:
            entropy = special.xlogy(1.0 + u, 1.0 + u) + special.xlogy(1.0 - u, 1.0 - u)
            value = float(entropy) / (2.0 * self.scale_value)
        elif self.kind is TargetKind.SOFT_THRESHOLD:
            value = abs(u) / self.scale_value
        else:
            return numeric_conjugate_at_neg(self, u)
        return value - self.offset

    def gaussian_expectation(
        self, mu: float, sigma: float, rule: Optional[QuadratureRule] = None
    ) -> float:
        """
        E_Z[h(mu + sigma·Z)] for Z ~ N(0, 1).

        Abs, Huber and SoftThreshold use truncated-normal moments. LogCosh uses
        Gauss-Hermite while eta·sigma ≤ LOGCOSH_HERMITE_SPREAD and the split
        into E|X| plus a Gauss-Laguerre remainder beyond. Custom targets use
        adaptive quadrature split at their kinks.

        :param mu: Center
        :param sigma: Nonnegative scale; 0 returns h(mu)
        :param rule: Hermite rule for the narrow LogCosh branch
        :return: The expectation
        """
        if sigma < 0.0:
            raise ValueError(f"gaussian_expectation needs sigma >= 0, got {sigma}")
        if sigma <= DEGENERATE_SCALE:
            return float(self.evaluate(mu))

        if self.kind is TargetKind.ABS:
            value = _absolute_moment(mu, sigma)
        elif self.kind is TargetKind.SOFT_THRESHOLD:
            width = 1.0 / self.scale_value
            upper = (mu - width) / sigma
            lower = (-mu - width) / sigma
            value = (
                (mu - width) * normal_cdf(upper)
                + sigma * normal_pdf(upper)
                + (-mu - width) * normal_cdf(lower)
                + sigma * normal_pdf(lower)
            )
        elif self.kind is TargetKind.HUBER:
            value = _huber_gaussian_expectation(self.scale_value, mu, sigma)
        elif self.kind is TargetKind.LOGCOSH:
            eta = self.scale_value
            if eta * sigma <= LOGCOSH_HERMITE_SPREAD:
                hermite = rule or gauss_hermite(DEFAULT_HERMITE_NODES)
                return hermite.expect_standard_normal(lambda z: self.evaluate(mu + sigma * z))
            value = float(_logcosh_split_value(eta, np.array([mu]), np.array([sigma]))[0])
        else:
            return gaussian_expectation_adaptive(self, mu, sigma)
        return float(value) + self.offset

    def derivative_expectation(
        self, mu: ArrayLike, sigma: ArrayLike, rule: Optional[QuadratureRule] = None
    ) -> ArrayLike:
        """
        E_Z[h'(mu + sigma·Z)], vectorized over broadcastable (mu, sigma).

        Entries with sigma below DEGENERATE_SCALE evaluate h'(mu) directly.
        LogCosh entries are routed per entry between Gauss-Hermite and the
        sign/Laguerre split on eta·sigma; Custom entries go through adaptive
        quadrature one at a time.

        :param mu: Center(s)
        :param sigma: Nonnegative scale(s)
        :param rule: Hermite rule for the narrow LogCosh branch
        :return: The expectation(s)
        """
        scalar = np.ndim(mu) == 0 and np.ndim(sigma) == 0
        mu_arr, sigma_arr = np.broadcast_arrays(
            np.atleast_1d(np.asarray(mu, dtype=float)),
            np.atleast_1d(np.asarray(sigma, dtype=float)),
        )
        degenerate = sigma_arr <= DEGENERATE_SCALE
        safe_sigma = np.where(degenerate, 1.0, sigma_arr)

        if self.kind is TargetKind.ABS:
            value = 2.0 * normal_cdf(mu_arr / safe_sigma) - 1.0
        elif self.kind is TargetKind.SOFT_THRESHOLD:
            width = 1.0 / self.scale_value
            value = (
                normal_cdf((mu_arr - width) / safe_sigma)
                + normal_cdf((mu_arr + width) / safe_sigma)
                - 1.0
            )
        elif self.kind is TargetKind.HUBER:
            k = self.scale_value
            upper = (mu_arr + 1.0 / k) / safe_sigma
            lower = (mu_arr - 1.0 / k) / safe_sigma
            value = (
                (1.0 - k * mu_arr) * normal_cdf(lower)
                + (1.0 + k * mu_arr) * normal_cdf(upper)
                - 1.0
                + k * safe_sigma * (normal_pdf(upper) - normal_pdf(lower))
            )
        elif self.kind is TargetKind.LOGCOSH:
            eta = self.scale_value
            narrow = eta * safe_sigma <= LOGCOSH_HERMITE_SPREAD
            value = np.empty(mu_arr.shape)
            if np.any(narrow):
                hermite = rule or gauss_hermite(DEFAULT_HERMITE_NODES)
                shifted = (
                    mu_arr[narrow][:, np.newaxis]
                    + safe_sigma[narrow][:, np.newaxis] * hermite.standard_normal_points()
                )
                value[narrow] = np.tanh(eta * shifted) @ hermite.standard_normal_weights()
            if not np.all(narrow):
                value[~narrow] = _logcosh_split_slope(eta, mu_arr[~narrow], safe_sigma[~narrow])
        else:
            value = np.vectorize(
                lambda m, s: derivative_expectation_adaptive(self, m, s), otypes=[float]
            )(mu_arr, safe_sigma)

        value = np.where(degenerate, self.derivative(mu_arr), value)
        return float(value[0]) if scalar else value


def _absolute_moment(mu: ArrayLike, sigma: ArrayLike) -> ArrayLike:
    """E|mu + sigma·Z|."""
    z = mu / sigma
    return mu * (2.0 * normal_cdf(z) - 1.0) + 2.0 * sigma * normal_pdf(z)


def _folded_density(
    eta: float, mu: np.ndarray, sigma: np.ndarray, rule: QuadratureRule
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    φ(z₀ + τ/w) and φ(z₀ - τ/w) over the Laguerre nodes τ, with w = 2·eta·sigma
    and z₀ = -mu/sigma. These are the density of mu + sigma·Z at ±τ/(2eta) up
    to the factor 1/sigma. Returns both together with w.
    """
    width = 2.0 * eta * sigma
    z0 = (-mu / sigma)[:, np.newaxis]
    step = rule.nodes / width[:, np.newaxis]
    return normal_pdf(z0 + step), normal_pdf(z0 - step), width


def _logcosh_split_value(
    eta: float, mu: np.ndarray, sigma: np.ndarray, rule: Optional[QuadratureRule] = None
) -> np.ndarray:
    """
    E[log cosh(eta·X)/eta] as E|X| - ln 2/eta + E[log1p(e^{-2eta|X|})]/eta.

    The last term lives on the 1/(2eta) scale around the origin and is
    integrated by Gauss-Laguerre in τ = 2eta|x|.
    """
    laguerre = rule or gauss_laguerre(DEFAULT_LAGUERRE_NODES)
    tau = laguerre.nodes
    # e^τ·log1p(e^{-τ}) stays within [ln 2, 1]
    kernel = np.exp(tau) * np.log1p(np.exp(-tau))
    ahead, behind, width = _folded_density(eta, mu, sigma, laguerre)
    remainder = ((ahead + behind) * kernel) @ laguerre.weights / width
    return _absolute_moment(mu, sigma) + (remainder - LOG_2) / eta


def _logcosh_split_slope(
    eta: float, mu: np.ndarray, sigma: np.ndarray, rule: Optional[QuadratureRule] = None
) -> np.ndarray:
    """
    E[tanh(eta·X)] as E[sign X] - 2E[sign(X)/(1 + e^{2eta|X|})], the second
    term by Gauss-Laguerre in τ = 2eta|x|.
    """
    laguerre = rule or gauss_laguerre(DEFAULT_LAGUERRE_NODES)
    kernel = 2.0 / (1.0 + np.exp(-laguerre.nodes))
    ahead, behind, width = _folded_density(eta, mu, sigma, laguerre)
    remainder = ((ahead - behind) * kernel) @ laguerre.weights / width
    return 2.0 * normal_cdf(mu / sigma) - 1.0 - remainder


def _huber_gaussian_expectation(k: float, mu: float, sigma: float) -> float:
    """
    E[h(X)] for the Huber target and X ~ N(mu, sigma²), from partial moments
    of X on (-∞, -1/k), [-1/k, 1/k] and (1/k, ∞).
    """
    width = 1.0 / k
    lo = (-width - mu) / sigma
    hi = (width - mu) / sigma
    mass = normal_cdf(hi) - normal_cdf(lo)
    second_moment = (
        (mu * mu + sigma * sigma) * mass
        + 2.0 * mu * sigma * (normal_pdf(lo) - normal_pdf(hi))
        + sigma * sigma * (lo * normal_pdf(lo) - hi * normal_pdf(hi))
    )
    right_tail = normal_cdf(-hi)
    left_tail = normal_cdf(lo)
    right = mu * right_tail + sigma * normal_pdf(hi) - 0.5 * width * right_tail
    left = -mu * left_tail + sigma * normal_pdf(lo) - 0.5 * width * left_tail
    return float(0.5 * k * second_moment + right + left)


def numeric_conjugate_at_neg(
    h: TargetFunction, u: float, half_width: float = 50.0, step: float = 1e-3
) -> float:
    """
    Grid supremum of -u·x - h(x) over [-half_width, half_width].

    :param h: Target
    :param u: Comparator in [-1, 1]
    :return: Grid estimate of h*(-u)
    """
    grid = np.linspace(-half_width, half_width, int(round(2.0 * half_width / step)) + 1)
    return float(np.max(-u * grid - np.asarray(h.evaluate(grid))))


def _adaptive_breaks(h: TargetFunction, mu: float, sigma: float) -> List[float]:
    # LogCosh bends on the 1/eta scale around the origin
    features = h.kinks + ((0.0,) if h.kind is TargetKind.LOGCOSH else ())
    return sorted((x - mu) / sigma for x in features if abs(x - mu) < 30.0 * sigma)


def _adaptive_normal_integral(
    fn: Callable[[np.ndarray], ArrayLike], mu: float, sigma: float, breaks: List[float]
) -> float:
    def integrand(z: float) -> float:
        return float(fn(mu + sigma * z)) * float(normal_pdf(z))

    value, _ = integrate.quad(
        integrand, -40.0, 40.0, points=breaks or None, epsabs=1e-13, epsrel=1e-12, limit=400
    )
    return float(value)


def gaussian_expectation_adaptive(h: TargetFunction, mu: float, sigma: float) -> float:
    """
    E_Z[h(mu + sigma·Z)] by adaptive quadrature split at the kinks of h.

    :param h: Target
    :param mu: Center
    :param sigma: Positive scale
    :return: The expectation
    """
    if sigma <= DEGENERATE_SCALE:
        return float(h.evaluate(mu))
    return _adaptive_normal_integral(h.evaluate, mu, sigma, _adaptive_breaks(h, mu, sigma))


def derivative_expectation_adaptive(h: TargetFunction, mu: float, sigma: float) -> float:
    """E_Z[h'(mu + sigma·Z)] by adaptive quadrature split at the kinks of h."""
    if sigma <= DEGENERATE_SCALE:
        return float(h.derivative(mu))
    return _adaptive_normal_integral(h.derivative, mu, sigma, _adaptive_breaks(h, mu, sigma))


def abs_target() -> TargetFunction:
    return TargetFunction(TargetKind.ABS)


def huber_target(k: float) -> TargetFunction:
    return TargetFunction(TargetKind.HUBER, scale=float(k))


def logcosh_target(eta: float) -> TargetFunction:
    return TargetFunction(TargetKind.LOGCOSH, scale=float(eta))


def soft_threshold_target(eta: float) -> TargetFunction:
    return TargetFunction(TargetKind.SOFT_THRESHOLD, scale=float(eta))


def custom_target(
    value_fn: Callable[[np.ndarray], np.ndarray],
    derivative_fn: Callable[[np.ndarray], np.ndarray],
    convex: bool,
    kinks: Tuple[float, ...] = (),
) -> TargetFunction:
    """
    Build a user-supplied target.

    :param value_fn: Vectorized h, 1-Lipschitz
    :param derivative_fn: Vectorized h'
    :param convex: False routes bound checks to the nonconvex error form
    :param kinks: Points where h' or h'' jumps
    :return: Custom target
    """
    return TargetFunction(
        TargetKind.CUSTOM,
        convex=convex,
        value_fn=value_fn,
        derivative_fn=derivative_fn,
        custom_kinks=tuple(float(k) for k in kinks),
    )


def target_from_name(name: str, scale: Optional[float] = None) -> TargetFunction:
    """
    Resolve a CLI target name.

    :param name: One of abs, huber, logcosh, softthr
    :param scale: k or eta for the scaled kinds
    :return: Target
    :raises ValueError: For unknown names or a missing scale
    """
    try:
        kind = TargetKind(name.lower())
    except ValueError:
        raise ValueError(
            f"unknown target '{name}', expected abs, huber, logcosh or softthr"
        ) from None
    if kind is TargetKind.CUSTOM:
        raise ValueError("custom targets are built in code, not by name")
    if kind is TargetKind.ABS:
        return abs_target()
    if scale is None:
        raise ValueError(f"target '{name}' needs a scale")
    return TargetFunction(kind, scale=float(scale))
