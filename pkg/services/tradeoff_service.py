"""
Tradeoff Service - √T prefactors of the regret bounds and the ε-γ curve

All prefactors are for learners tuned with scale α/√T:
    γ_Huber, γ_OGD            Huber learner and projected OGD
    γ_LSE, γ_MWU              log-cosh learner and two-expert MWU
    γ_STh                     soft-threshold learner
The gaps are γ_OGD - γ_Huber and γ_MWU - γ_LSE; both are positive for all α.
"""

import math
from dataclasses import asdict, dataclass
from typing import Dict, Optional

import numpy as np
import structlog
from scipy import optimize, special

from core.specfn import (
    SQRT_2,
    SQRT_2_OVER_PI,
    SQRT_PI,
    erfi_inverse,
    integrated_normal_cdf,
    normal_cdf,
    normal_pdf,
)
from core.targets import logcosh_target

logger = structlog.get_logger(__name__)

GAMMA_BRACKET_WIDTH = 20.0
GAMMA_XTOL = 1e-12
TRADEOFF_RESIDUAL_TOL = 1e-10
# Relative slack on the upper end of eps, absorbs decimal round trips of √(2/π)
EPS_RANGE_SLACK = 1e-12


def _check_prefactor_args(u: float, alpha: float) -> None:
    if not alpha > 0.0:
        raise ValueError(f"prefactors need alpha > 0, got {alpha}")
    if not -1.0 <= u <= 1.0:
        raise ValueError(f"prefactors need u in [-1, 1], got {u}")


def _binary_entropy_term(u: float) -> float:
    """(1+u)ln(1+u) + (1-u)ln(1-u)."""
    return float(special.xlogy(1.0 + u, 1.0 + u) + special.xlogy(1.0 - u, 1.0 - u))


def logcosh_smoothing(alpha: float) -> float:
    """E[α⁻¹ ln cosh(αZ)], which lies in (0, α/2) and tends to √(2/π)."""
    return logcosh_target(alpha).gaussian_expectation(0.0, 1.0)


def gamma_huber(u: float, alpha: float) -> float:
    a = 1.0 / alpha
    return float(
        u * u / (2.0 * alpha) + (alpha + a) * normal_cdf(a) + normal_pdf(a) - 0.5 * alpha - a
    )


def gamma_ogd(u: float, alpha: float) -> float:
    return 0.5 * (u * u / alpha + alpha)


def gap_ogd(alpha: float) -> float:
    """(α + 1/α)(1 - Φ(1/α)) - φ(1/α), evaluated on the upper tail."""
    a = 1.0 / alpha
    return float((alpha + a) * normal_cdf(-a) - normal_pdf(a))


def gamma_lse(u: float, alpha: float) -> float:
    return _binary_entropy_term(u) / (2.0 * alpha) + logcosh_smoothing(alpha)


def gamma_mwu(u: float, alpha: float) -> float:
    return _binary_entropy_term(u) / (2.0 * alpha) + 0.5 * alpha


def gap_mwu(alpha: float) -> float:
    return 0.5 * alpha - logcosh_smoothing(alpha)


def gamma_sth(u: float, alpha: float) -> float:
    a = 1.0 / alpha
    return float(abs(u) * a + 2.0 * a * normal_cdf(a) + 2.0 * normal_pdf(a) - 2.0 * a)


@dataclass(frozen=True)
class PrefactorRecord:
    u: float
    alpha: float
    gamma_huber: float
    gamma_ogd: float
    gamma_lse: float
    gamma_mwu: float
    gamma_sth: float
    gap_ogd: float
    gap_mwu: float
    reference: float = SQRT_2_OVER_PI

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


def prefactors(u: float, alpha: float) -> PrefactorRecord:
    """
    Every prefactor at comparator u and scale α.

    :param u: Comparator in [-1, 1]
    :param alpha: Positive scale
    :return: PrefactorRecord
    """
    _check_prefactor_args(u, alpha)
    smoothing = logcosh_smoothing(alpha)
    entropy = _binary_entropy_term(u)
    return PrefactorRecord(
        u=float(u),
        alpha=float(alpha),
        gamma_huber=gamma_huber(u, alpha),
        gamma_ogd=gamma_ogd(u, alpha),
        gamma_lse=entropy / (2.0 * alpha) + smoothing,
        gamma_mwu=gamma_mwu(u, alpha),
        gamma_sth=gamma_sth(u, alpha),
        gap_ogd=gap_ogd(alpha),
        gap_mwu=0.5 * alpha - smoothing,
    )


def mwu_minimax_alpha() -> float:
    """α = √(2 ln 2), the minimizer of sup_u γ_MWU(u, α) = ln2/α + α/2."""
    return math.sqrt(2.0 * math.log(2.0))


@dataclass(frozen=True)
class TradeoffPoint:
    """
    Optimal uniform-regret prefactor γ under a total-loss budget ε√T.

    :param eps: Budget in (0, √(2/π)]
    :param gamma: γ(ε) ≥ √(2/π)
    :param alpha: Soft-threshold scale with ε - γ = -1/α; inf at ε = √(2/π)
    :param residual: |∫_{-∞}^{ε-γ} Φ - ε/2|
    """

    eps: float
    gamma: float
    alpha: float
    residual: float

    @property
    def baseline(self) -> float:
        return baseline_prefactor(self.eps)


def tradeoff_residual(eps: float, gamma: float) -> float:
    return float(integrated_normal_cdf(eps - gamma) - 0.5 * eps)


def solve_gamma_eps(eps: float) -> TradeoffPoint:
    """
    Solve ∫_{-∞}^{ε-γ} Φ(x) dx = ε/2 for γ by bisection on [ε, ε + 20].

    :param eps: Budget in (0, √(2/π)]
    :return: TradeoffPoint
    :raises ValueError: If eps is out of range or the soft-threshold check fails
    """
    if not 0.0 < eps <= SQRT_2_OVER_PI * (1.0 + EPS_RANGE_SLACK):
        raise ValueError(f"eps must be in (0, sqrt(2/pi)], got {eps}")
    eps = min(eps, SQRT_2_OVER_PI)

    if tradeoff_residual(eps, eps) <= 0.0:
        gamma = eps
    else:
        gamma = optimize.bisect(
            lambda g: tradeoff_residual(eps, g),
            eps,
            eps + GAMMA_BRACKET_WIDTH,
            xtol=GAMMA_XTOL,
            rtol=4.0 * np.finfo(float).eps,
            maxiter=500,
        )
    residual = abs(tradeoff_residual(eps, gamma))
    alpha = math.inf if gamma - eps <= 0.0 else 1.0 / (gamma - eps)

    if math.isfinite(alpha):
        budget = gamma_sth(0.0, alpha)
        if abs(budget - eps) > 1e-8 or abs(gamma_sth(1.0, alpha) - gamma) > 1e-8:
            logger.error("soft-threshold route disagrees", eps=eps, gamma=gamma, budget=budget)
            raise ValueError(f"soft-threshold check failed at eps={eps}")
    if residual > TRADEOFF_RESIDUAL_TOL:
        logger.warning("tradeoff residual above tolerance", eps=eps, residual=residual)
    return TradeoffPoint(float(eps), float(gamma), float(alpha), residual)


def baseline_prefactor(eps: float) -> float:
    """ε + √2·erfi⁻¹(√2/(√π ε)), the comparison learner's prefactor."""
    if not eps > 0.0:
        raise ValueError(f"eps must be positive, got {eps}")
    return eps + SQRT_2 * erfi_inverse(SQRT_2 / (SQRT_PI * eps))


def baseline_tradeoff(eps: float, T: int) -> float:
    """Uniform-regret bound of the comparison learner.

    ε√T + √(2T)·erfi⁻¹(√2/(√π ε))
    """
    if T < 1:
        raise ValueError(f"horizon must be at least 1, got T={T}")
    return baseline_prefactor(eps) * math.sqrt(T)


def sup_gamma(kind: str, alpha: float, u_grid: Optional[np.ndarray] = None) -> float:
    """Worst prefactor over comparators u on a grid (default: 201 points)."""
    grid = np.linspace(-1.0, 1.0, 201) if u_grid is None else u_grid
    fn = {
        "huber": gamma_huber,
        "ogd": gamma_ogd,
        "lse": gamma_lse,
        "mwu": gamma_mwu,
        "sth": gamma_sth,
    }[kind]
    return max(fn(float(u), alpha) for u in grid)
