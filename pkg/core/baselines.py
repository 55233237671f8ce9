"""
Baseline Learners - projected OGD, two-expert MWU and Cover's dynamic program

All learners follow the same batch protocol as the Stein learner:
reset(n_games), decide() -> x of shape (n_games,), observe(g).
"""

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
import structlog
from scipy import special

from core.exceptions import BooleanProtocolError, GameOver
from core.targets import TargetFunction

PotentialFn = Callable[[np.ndarray], np.ndarray]

# Distance from an integer tolerated in a Boolean running sum
INTEGER_TOLERANCE = 1e-9


def ogd_step(x_prev: float, g_prev: float, eta: float) -> float:
    """
    Projected gradient step Π_[-1,1](x_prev - eta·g_prev).

    :param x_prev: Previous iterate in [-1, 1]
    :param g_prev: Previous gradient
    :param eta: Positive step size
    :return: Next iterate
    """
    if abs(x_prev) > 1.0:
        raise ValueError(f"ogd_step needs |x_prev| <= 1, got {x_prev}")
    return float(np.clip(x_prev - eta * g_prev, -1.0, 1.0))


def mwu_decide(s_prev: float, eta: float) -> float:
    """Two-expert exponential weights reduced to -tanh(eta·s_prev)."""
    return float(-np.tanh(eta * s_prev))


def mwu_softmax_decide(s_prev: float, eta: float) -> float:
    """
    The same decision computed literally: softmax weights of experts with
    cumulative losses (s_prev, -s_prev), output w_1 - w_2.
    """
    weights = special.softmax([-eta * s_prev, eta * s_prev])
    return float(weights[0] - weights[1])


@lru_cache(maxsize=64)
def rademacher_pmf(n: int) -> np.ndarray:
    """
    Probabilities of the Rademacher sum RS(n) on support -n, -n+2, ..., n,
    from log-binomial coefficients.

    :param n: Number of ±1 coins, n ≥ 0
    :return: Read-only array of n + 1 probabilities
    """
    if n < 0:
        raise ValueError(f"Rademacher sum needs n >= 0, got {n}")
    heads = np.arange(n + 1)
    log_pmf = (
        special.gammaln(n + 1) - special.gammaln(heads + 1) - special.gammaln(n - heads + 1)
    ) - n * math.log(2.0)
    pmf = np.exp(log_pmf)
    pmf.setflags(write=False)
    return pmf


def rademacher_support(n: int) -> np.ndarray:
    return np.arange(-n, n + 1, 2, dtype=float)


def rademacher_expectation(fn: PotentialFn, n: int) -> float:
    """E_{X~RS(n)}[fn(X)] with compensated summation."""
    return math.fsum(rademacher_pmf(n) * np.asarray(fn(rademacher_support(n)), dtype=float))


@dataclass(frozen=True)
class CoverSpec:
    """
    Cover's learner for horizon T and a convex 1-Lipschitz potential ψ*.

    :param T: Horizon
    :param psi_star: Vectorized ψ*_T
    :param achievability: E_{X~RS(T)}[ψ*(X)], achievable when ≤ 0
    """

    T: int
    psi_star: PotentialFn = field(repr=False)
    achievability: float = 0.0

    @classmethod
    def build(cls, T: int, psi_star: PotentialFn) -> "CoverSpec":
        if T < 1:
            raise ValueError(f"horizon must be at least 1, got T={T}")
        return cls(T, psi_star, rademacher_expectation(psi_star, T))


def centered_potential(h: TargetFunction, T: int) -> PotentialFn:
    """ψ*(x) = h(x) - E_{RS(T)}[h(X)], achievable with equality."""
    shift = rademacher_expectation(lambda x: np.asarray(h.evaluate(x)), T)
    return lambda x: np.asarray(h.evaluate(x)) - shift


def cover_achievability(spec: CoverSpec) -> float:
    """E_{X~RS(T)}[ψ*(X)]; the caller checks the sign."""
    return rademacher_expectation(spec.psi_star, spec.T)


def cover_decide(spec: CoverSpec, t: int, s_prev: float) -> float:
    """
    x_t = -½ E_{X~RS(T-t)}[ψ*(s + X + 1) - ψ*(s + X - 1)].

    :param spec: Cover specification
    :param t: Round in [1, T]
    :param s_prev: Integer-valued running sum
    :return: Decision in [-1, 1]
    :raises BooleanProtocolError: If s_prev is not an integer
    """
    if not 1 <= t <= spec.T:
        raise ValueError(f"round must be in [1, {spec.T}], got {t}")
    if abs(s_prev - round(s_prev)) > INTEGER_TOLERANCE:
        raise BooleanProtocolError(f"running sum {s_prev} is not an integer")
    s = float(round(s_prev))
    n = spec.T - t
    support = rademacher_support(n)
    difference = np.asarray(spec.psi_star(s + support + 1.0)) - np.asarray(
        spec.psi_star(s + support - 1.0)
    )
    return -0.5 * math.fsum(rademacher_pmf(n) * difference)


class OGDLearner:
    """Projected OGD with step alpha/√T, started at x_1 = 0."""

    def __init__(self, alpha: float, horizon: int):
        self.logger = structlog.get_logger(self.__class__.__name__)
        if not alpha > 0.0:
            raise ValueError(f"OGD needs alpha > 0, got {alpha}")
        self.alpha = alpha
        self.horizon = horizon
        self.eta = alpha / math.sqrt(horizon)
        self.reset(1)

    @property
    def name(self) -> str:
        return f"ogd({self.alpha:g})"

    def reset(self, n_games: int = 1) -> None:
        self.t = 1
        self.x = np.zeros(n_games)

    def decide(self) -> np.ndarray:
        if self.t > self.horizon:
            raise GameOver(f"decision requested after horizon T={self.horizon}")
        return self.x.copy()

    def observe(self, g: np.ndarray) -> None:
        if self.t > self.horizon:
            raise GameOver(f"gradient observed after horizon T={self.horizon}")
        self.x = np.clip(self.x - self.eta * np.asarray(g, dtype=float), -1.0, 1.0)
        self.t += 1


class MWULearner:
    """Two-expert MWU with rate alpha/√T, played as -tanh(η·s)."""

    def __init__(self, alpha: float, horizon: int):
        self.logger = structlog.get_logger(self.__class__.__name__)
        if not alpha > 0.0:
            raise ValueError(f"MWU needs alpha > 0, got {alpha}")
        self.alpha = alpha
        self.horizon = horizon
        self.eta = alpha / math.sqrt(horizon)
        self.reset(1)

    @property
    def name(self) -> str:
        return f"mwu({self.alpha:g})"

    def reset(self, n_games: int = 1) -> None:
        self.t = 1
        self.s = np.zeros(n_games)

    def decide(self) -> np.ndarray:
        if self.t > self.horizon:
            raise GameOver(f"decision requested after horizon T={self.horizon}")
        return -np.tanh(self.eta * self.s)

    def observe(self, g: np.ndarray) -> None:
        if self.t > self.horizon:
            raise GameOver(f"gradient observed after horizon T={self.horizon}")
        self.s = self.s + np.asarray(g, dtype=float)
        self.t += 1


class CoverLearner:
    """Cover's dynamic program; only valid against Boolean gradients."""

    def __init__(self, spec: CoverSpec):
        self.logger = structlog.get_logger(self.__class__.__name__)
        self.spec = spec
        self.horizon = spec.T
        if spec.achievability > 1e-12:
            self.logger.warning("potential is not achievable", achievability=spec.achievability)
        self.reset(1)

    @property
    def name(self) -> str:
        return "cover"

    def reset(self, n_games: int = 1) -> None:
        self.t = 1
        self.s = np.zeros(n_games)

    def decide(self) -> np.ndarray:
        if self.t > self.horizon:
            raise GameOver(f"decision requested after horizon T={self.horizon}")
        return np.array([cover_decide(self.spec, self.t, float(s)) for s in self.s])

    def observe(self, g: np.ndarray) -> None:
        if self.t > self.horizon:
            raise GameOver(f"gradient observed after horizon T={self.horizon}")
        g = np.asarray(g, dtype=float)
        if np.any(np.abs(np.abs(g) - 1.0) > INTEGER_TOLERANCE):
            raise BooleanProtocolError("Cover's learner only accepts gradients in {-1, 1}")
        self.s = self.s + g
        self.t += 1
