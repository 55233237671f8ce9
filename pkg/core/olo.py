"""
Stein Learner - fixed-horizon online linear optimization on [-1, 1]

The learner keeps the running gradient sum s and a nonincreasing variance
budget ρ_0 ≥ ρ_1 ≥ ... ≥ ρ_T, and plays
    x_t = E_Z[f_{s, ρ_{t-1}, h}(s + ρ_t Z)]
evaluated as the one-dimensional average
    x_t = -∫₀¹ E_Z[h'(s + √(ρ²_{t-1} - u² c_t) Z)] du,   c_t = ρ²_{t-1} - ρ²_t.

The absolute-value, Huber and soft-threshold targets have closed forms built
from two Gaussian integrals over u (an Owen's T expression); every other
target goes through graded Legendre x Hermite quadrature.
"""

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np
import structlog

from core.exceptions import GameOver, NumericalFault, ScheduleViolation
from core.specfn import (
    DEFAULT_GRADED_NODES,
    DEFAULT_HERMITE_NODES,
    DEFAULT_LAGUERRE_NODES,
    SQRT_2,
    SQRT_2PI,
    erf,
    gauss_hermite,
    gauss_laguerre,
    graded_legendre01,
    integrated_normal_cdf,
    normal_cdf,
    normal_pdf,
    owens_t,
)
from core.stein import solve
from core.targets import TargetFunction, TargetKind

# c_t below this fraction of ρ²_{t-1} is a zero increment
FLAT_INCREMENT = 1e-15
# Batches larger than this are split for the quadrature path
GENERIC_CHUNK = 256

RhoPolicy = Callable[[int, np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class RhoSchedule:
    """
    Variance budget ρ²_0, ..., ρ²_T, stored as variances so that the
    increments c_t = ρ²_{t-1} - ρ²_t are exact for integer budgets.
    """

    variances: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.variances, dtype=float)
        if v.ndim != 1 or v.size < 2:
            raise ScheduleViolation("schedule needs rho_0..rho_T with T >= 1")
        if not np.all(np.isfinite(v)):
            raise ScheduleViolation("schedule contains non-finite values")
        if v[-1] < 0.0:
            raise ScheduleViolation("rho_T must be nonnegative")
        if np.any(v[:-1] <= 0.0):
            first = int(np.argmax(v[:-1] <= 0.0))
            raise ScheduleViolation(f"rho_{first} must be positive before the final round")
        if np.any(np.diff(v) > 0.0):
            first = int(np.argmax(np.diff(v) > 0.0)) + 1
            raise ScheduleViolation(f"rho_{first} exceeds rho_{first - 1}")
        v.setflags(write=False)
        object.__setattr__(self, "variances", v)

    @classmethod
    def from_rho(cls, rho: Sequence[float]) -> "RhoSchedule":
        return cls(np.square(np.asarray(rho, dtype=float)))

    @property
    def T(self) -> int:
        return int(self.variances.size - 1)

    @property
    def rho(self) -> np.ndarray:
        return np.sqrt(self.variances)

    @property
    def increments(self) -> np.ndarray:
        """c_1, ..., c_T."""
        return self.variances[:-1] - self.variances[1:]


def rho_sqrt_horizon(T: int, scale: float = 1.0) -> RhoSchedule:
    """
    Canonical schedule ρ_t = scale·√(T - t).

    :param T: Horizon, at least 1
    :param scale: Multiplier on every ρ_t
    :return: RhoSchedule with c_t = scale²
    """
    if T < 1:
        raise ValueError(f"horizon must be at least 1, got T={T}")
    remaining = np.arange(T, -1, -1, dtype=float)
    return RhoSchedule(scale * scale * remaining)


@dataclass(frozen=True)
class LearnerState:
    """
    Value state of a single game: round t (1-based), s_prev = Σ_{i<t} g_i,
    the schedule and the target.
    """

    t: int
    s_prev: float
    schedule: RhoSchedule
    target: TargetFunction

    @classmethod
    def initial(cls, schedule: RhoSchedule, target: TargetFunction) -> "LearnerState":
        return cls(1, 0.0, schedule, target)

    @property
    def variance_prev(self) -> float:
        return float(self.schedule.variances[self.t - 1])

    @property
    def increment(self) -> float:
        return float(self.schedule.variances[self.t - 1] - self.schedule.variances[self.t])


def _check_round(state: LearnerState) -> None:
    if state.t > state.schedule.T:
        raise GameOver(f"round {state.t} requested after horizon T={state.schedule.T}")
    if state.t < 1:
        raise ValueError(f"round index starts at 1, got {state.t}")
    if state.variance_prev <= 0.0:
        raise ScheduleViolation(f"rho_{state.t - 1} = 0 before round {state.t}")


def _split_branches(variance: np.ndarray, increment: np.ndarray):
    flat = increment <= FLAT_INCREMENT * variance
    last = ~flat & (variance - increment <= FLAT_INCREMENT * variance)
    return flat, last, ~(flat | last)


def absolute_kernel(mu: np.ndarray, variance: np.ndarray, increment: np.ndarray) -> np.ndarray:
    """
    A(μ) = -∫₀¹ E_Z[sign(μ + √(v - u²c) Z)] du for v = ρ²_{t-1}, c = c_t.

    Three regimes: c = 0, the final round v = c, and v > c > 0 (Owen's T).

    :return: A evaluated elementwise
    """
    mu, variance, increment = np.broadcast_arrays(
        np.asarray(mu, dtype=float),
        np.asarray(variance, dtype=float),
        np.asarray(increment, dtype=float),
    )
    out = np.empty(mu.shape)
    flat, last, general = _split_branches(variance, increment)

    sigma = np.sqrt(variance)
    zeta = mu / sigma

    out[flat] = -erf(zeta[flat] / SQRT_2)

    zl = zeta[last]
    out[last] = -np.sign(zl) * (1.0 - SQRT_2PI * integrated_normal_cdf(-np.abs(zl)))

    if np.any(general):
        m, s, z = mu[general], sigma[general], zeta[general]
        c = increment[general]
        residual = np.sqrt(variance[general] - c)
        slope = np.sqrt(c / (variance[general] - c))
        root_c = np.sqrt(c)
        out[general] = (
            -erf(m / (SQRT_2 * residual))
            + (SQRT_2PI * s / root_c) * normal_pdf(z) * erf(z * slope / SQRT_2)
            - (2.0 * SQRT_2PI * m / root_c) * owens_t(z, slope)
        )
    return out


def smoothing_kernel(mu: np.ndarray, variance: np.ndarray, increment: np.ndarray) -> np.ndarray:
    """
    K(μ) = ∫₀¹ τ^{-1/2} √(v - τc) φ(μ / √(v - τc)) dτ, the density term that
    the Huber output adds to the absolute-value kernel.

    :return: K evaluated elementwise
    """
    mu, variance, increment = np.broadcast_arrays(
        np.asarray(mu, dtype=float),
        np.asarray(variance, dtype=float),
        np.asarray(increment, dtype=float),
    )
    out = np.empty(mu.shape)
    flat, last, general = _split_branches(variance, increment)

    sigma = np.sqrt(variance)
    zeta = mu / sigma

    out[flat] = 2.0 * sigma[flat] * normal_pdf(zeta[flat])

    ml, sl, zl = mu[last], sigma[last], zeta[last]
    out[last] = 0.5 * SQRT_2PI * (
        np.abs(ml) * normal_pdf(zl) + (variance[last] - ml * ml) * normal_cdf(-np.abs(zl)) / sl
    )

    if np.any(general):
        m, s, z = mu[general], sigma[general], zeta[general]
        c = increment[general]
        residual = np.sqrt(variance[general] - c)
        slope = np.sqrt(c / (variance[general] - c))
        root_c = np.sqrt(c)
        out[general] = (
            residual * normal_pdf(m / residual)
            + (0.5 * SQRT_2PI * m * s / root_c) * normal_pdf(z) * erf(z * slope / SQRT_2)
            + (SQRT_2PI / root_c) * (variance[general] - m * m) * owens_t(z, slope)
        )
    return out


def closed_form_output(
    h: TargetFunction, s: np.ndarray, variance: np.ndarray, increment: np.ndarray
) -> np.ndarray:
    """
    Closed-form x_t for the Abs, Huber and SoftThreshold targets.

    :raises ValueError: For any other target kind
    """
    if h.kind is TargetKind.ABS:
        return absolute_kernel(s, variance, increment)
    if h.kind is TargetKind.SOFT_THRESHOLD:
        width = 1.0 / h.scale_value
        return 0.5 * (
            absolute_kernel(s - width, variance, increment)
            + absolute_kernel(s + width, variance, increment)
        )
    if h.kind is TargetKind.HUBER:
        k = h.scale_value
        width = 1.0 / k
        return 0.5 * (
            (1.0 - k * s) * absolute_kernel(s - width, variance, increment)
            + (1.0 + k * s) * absolute_kernel(s + width, variance, increment)
            + k * smoothing_kernel(s - width, variance, increment)
            - k * smoothing_kernel(s + width, variance, increment)
        )
    raise ValueError(f"no closed form for target {h.name}")


def quadrature_output(
    h: TargetFunction,
    s: np.ndarray,
    variance: np.ndarray,
    increment: np.ndarray,
    hermite_nodes: int = DEFAULT_HERMITE_NODES,
    legendre_nodes: int = DEFAULT_GRADED_NODES,
) -> np.ndarray:
    """
    x_t = -∫₀¹ E_Z[h'(s + √(v - u²c) Z)] du, integrated after u = 1 - q² on a
    rule graded toward q = 0, with the inner expectation from the target.

    :return: Unclamped outputs, elementwise in (s, v, c)
    """
    s, variance, increment = np.broadcast_arrays(
        np.asarray(s, dtype=float),
        np.asarray(variance, dtype=float),
        np.asarray(increment, dtype=float),
    )
    rule = graded_legendre01(legendre_nodes)
    hermite = gauss_hermite(hermite_nodes)
    q = rule.nodes
    # 1 - u² without cancellation
    lift = np.square(q) * (2.0 - np.square(q))
    jacobian = 2.0 * q * rule.weights

    flat_s, flat_v, flat_c = s.reshape(-1), variance.reshape(-1), increment.reshape(-1)
    out = np.empty(flat_s.shape)
    for start in range(0, flat_s.size, GENERIC_CHUNK):
        stop = start + GENERIC_CHUNK
        floor = (flat_v[start:stop] - flat_c[start:stop])[:, np.newaxis]
        spread = floor + lift * flat_c[start:stop, np.newaxis]
        scales = np.sqrt(np.maximum(spread, 0.0))
        inner = h.derivative_expectation(flat_s[start:stop, np.newaxis], scales, hermite)
        out[start:stop] = -(np.asarray(inner) @ jacobian)
    return out.reshape(s.shape)


def output_batch(
    h: TargetFunction,
    s: np.ndarray,
    variance: np.ndarray,
    increment: np.ndarray,
    force_generic: bool = False,
    hermite_nodes: int = DEFAULT_HERMITE_NODES,
    legendre_nodes: int = DEFAULT_GRADED_NODES,
) -> np.ndarray:
    """
    Clamped decisions for a batch of states, closed form first.

    :raises NumericalFault: If any output is not finite
    """
    if not force_generic and h.kind in (
        TargetKind.ABS,
        TargetKind.HUBER,
        TargetKind.SOFT_THRESHOLD,
    ):
        raw = closed_form_output(h, s, variance, increment)
    else:
        raw = quadrature_output(h, s, variance, increment, hermite_nodes, legendre_nodes)
    if not np.all(np.isfinite(raw)):
        raise NumericalFault(f"non-finite decision for target {h.name}")
    return np.clip(raw, -1.0, 1.0)


def decide(
    state: LearnerState,
    force_generic: bool = False,
    hermite_nodes: int = DEFAULT_HERMITE_NODES,
    legendre_nodes: int = DEFAULT_GRADED_NODES,
) -> float:
    """
    Decision x_t ∈ [-1, 1] for the given state.

    :param state: Current learner state
    :param force_generic: Skip the closed forms
    :return: x_t
    :raises ScheduleViolation: If ρ_{t-1} = 0 before round T
    :raises GameOver: If the horizon is exhausted
    """
    _check_round(state)
    out = output_batch(
        state.target,
        np.array([state.s_prev]),
        np.array([state.variance_prev]),
        np.array([state.increment]),
        force_generic,
        hermite_nodes,
        legendre_nodes,
    )
    return float(out[0])


def _closed(state: LearnerState, kind: TargetKind) -> float:
    _check_round(state)
    if state.target.kind is not kind:
        raise ValueError(f"closed form for {kind.value} called with target {state.target.name}")
    value = closed_form_output(
        state.target,
        np.array([state.s_prev]),
        np.array([state.variance_prev]),
        np.array([state.increment]),
    )
    return float(value[0])


def decide_closed_abs(state: LearnerState) -> float:
    """Unclamped closed-form output for h(x) = |x|."""
    return _closed(state, TargetKind.ABS)


def decide_closed_huber(state: LearnerState) -> float:
    """Unclamped closed-form output for the Huber target."""
    return _closed(state, TargetKind.HUBER)


def decide_closed_soft_threshold(state: LearnerState) -> float:
    """Unclamped closed-form output for the soft-threshold target."""
    return _closed(state, TargetKind.SOFT_THRESHOLD)


def decide_generic(
    state: LearnerState,
    hermite_nodes: int = DEFAULT_HERMITE_NODES,
    legendre_nodes: int = DEFAULT_GRADED_NODES,
) -> float:
    """Unclamped quadrature output, the oracle for the closed forms."""
    _check_round(state)
    value = quadrature_output(
        state.target,
        np.array([state.s_prev]),
        np.array([state.variance_prev]),
        np.array([state.increment]),
        hermite_nodes,
        legendre_nodes,
    )
    return float(value[0])


def decide_direct(state: LearnerState, hermite_nodes: int = DEFAULT_HERMITE_NODES) -> float:
    """
    x_t = E_Z[f_{s, ρ_{t-1}, h}(s + ρ_t Z)] evaluated literally: the Stein
    solution at (s, ρ_{t-1}) averaged over Hermite nodes.
    """
    _check_round(state)
    solution = solve(state.s_prev, math.sqrt(state.variance_prev), state.target, hermite_nodes)
    rho_t = math.sqrt(state.variance_prev - state.increment)
    rule = gauss_hermite(hermite_nodes)
    return rule.expect_standard_normal(
        lambda z: np.asarray(solution.evaluate(state.s_prev + rho_t * z))
    )


def decide_exponential_mixture(
    state: LearnerState,
    laguerre_nodes: int = DEFAULT_LAGUERRE_NODES,
    hermite_nodes: int = DEFAULT_HERMITE_NODES,
) -> float:
    """
    x_t = -∫₀^∞ e^{-τ} E_Z[h'(s + √(ρ²_{t-1} - e^{-2τ} c_t) Z)] dτ by
    Gauss-Laguerre in τ. Accurate when ρ²_{t-1} > c_t.
    """
    _check_round(state)
    rule = gauss_laguerre(laguerre_nodes)
    spread = state.variance_prev - np.exp(-2.0 * rule.nodes) * state.increment
    inner = state.target.derivative_expectation(
        state.s_prev, np.sqrt(np.maximum(spread, 0.0)), gauss_hermite(hermite_nodes)
    )
    return float(-np.dot(rule.weights, inner))


def observe(state: LearnerState, g: float) -> LearnerState:
    """
    Advance the state with gradient g.

    :param state: State at round t
    :param g: Any finite gradient
    :return: State at round t + 1 with s_prev + g
    :raises GameOver: After round T
    """
    if state.t > state.schedule.T:
        raise GameOver(f"gradient observed after horizon T={state.schedule.T}")
    if not math.isfinite(g):
        raise ValueError(f"gradient must be finite, got {g}")
    return replace(state, t=state.t + 1, s_prev=state.s_prev + g)


def effective_learning_rate(k: float, rho_t: float) -> float:
    """
    Effective step k·erf(1/(√2·k·ρ_t)) of the Huber learner's linear regime.

    :param k: Nominal Huber scale, positive
    :param rho_t: Remaining budget ρ_t ≥ 0; 0 returns k
    :return: Value in (0, k]
    """
    if not k > 0.0:
        raise ValueError(f"effective_learning_rate needs k > 0, got {k}")
    if rho_t < 0.0:
        raise ValueError(f"effective_learning_rate needs rho_t >= 0, got {rho_t}")
    if rho_t == 0.0:
        return k
    return float(k * erf(1.0 / (SQRT_2 * k * rho_t)))


class SteinLearner:
    """
    Batch learner that plays n independent games in lockstep.

    A fixed RhoSchedule is shared by all games. A rho_policy instead picks
    ρ_t per game before each decision from (t, s_prev, ρ_{t-1}); the realized
    schedules are kept for the bound ledger.
    """

    def __init__(
        self,
        target: TargetFunction,
        schedule: Optional[RhoSchedule] = None,
        rho_policy: Optional[RhoPolicy] = None,
        horizon: Optional[int] = None,
        initial_rho: Optional[float] = None,
        force_generic: bool = False,
        hermite_nodes: int = DEFAULT_HERMITE_NODES,
        legendre_nodes: int = DEFAULT_GRADED_NODES,
    ):
        """
        :param target: Target h
        :param schedule: Fixed schedule; mutually exclusive with rho_policy
        :param rho_policy: Online choice of ρ_t
        :param horizon: T, required with rho_policy
        :param initial_rho: ρ_0, required with rho_policy
        :param force_generic: Always use the quadrature path
        """
        self.logger = structlog.get_logger(self.__class__.__name__)
        if (schedule is None) == (rho_policy is None):
            raise ValueError("provide exactly one of schedule or rho_policy")
        if rho_policy is not None and (
            horizon is None or initial_rho is None or initial_rho <= 0.0
        ):
            raise ValueError("rho_policy needs horizon and a positive initial_rho")

        self.target = target
        self.schedule = schedule
        self.rho_policy = rho_policy
        self.horizon = schedule.T if schedule is not None else int(horizon or 0)
        self.initial_rho = initial_rho
        self.force_generic = force_generic
        self.hermite_nodes = hermite_nodes
        self.legendre_nodes = legendre_nodes
        self.reset(1)

    @property
    def name(self) -> str:
        return f"stein-{self.target.name}"

    def clone(self) -> "SteinLearner":
        """Fresh learner with the same configuration and no game state."""
        return SteinLearner(
            self.target,
            self.schedule,
            self.rho_policy,
            None if self.schedule is not None else self.horizon,
            self.initial_rho,
            self.force_generic,
            self.hermite_nodes,
            self.legendre_nodes,
        )

    def reset(self, n_games: int = 1) -> None:
        self.n_games = n_games
        self.t = 1
        self.s = np.zeros(n_games)
        if self.schedule is not None:
            self.variances = np.broadcast_to(self.schedule.variances, (n_games, self.horizon + 1))
        else:
            self.variances = np.zeros((n_games, self.horizon + 1))
            self.variances[:, 0] = float(self.initial_rho) ** 2  # type: ignore[arg-type]

    def decide(self) -> np.ndarray:
        """
        Decisions of all games for the current round.

        :return: Array of shape (n_games,)
        """
        if self.t > self.horizon:
            raise GameOver(f"decision requested after horizon T={self.horizon}")
        if self.rho_policy is not None:
            self._advance_policy()

        variance_prev = self.variances[:, self.t - 1]
        increment = variance_prev - self.variances[:, self.t]
        return output_batch(
            self.target,
            self.s,
            variance_prev,
            increment,
            self.force_generic,
            self.hermite_nodes,
            self.legendre_nodes,
        )

    def observe(self, g: np.ndarray) -> None:
        if self.t > self.horizon:
            raise GameOver(f"gradient observed after horizon T={self.horizon}")
        self.s = self.s + np.asarray(g, dtype=float)
        self.t += 1

    def realized_schedule(self, game: int = 0) -> RhoSchedule:
        """Schedule actually used by one game."""
        if self.schedule is not None:
            return self.schedule
        return RhoSchedule(np.array(self.variances[game]))

    def realized_variances(self) -> np.ndarray:
        """Variances of every game, shape (n_games, T + 1)."""
        return np.array(np.broadcast_to(self.variances, (self.n_games, self.horizon + 1)))

    def _advance_policy(self) -> None:
        rho_prev = np.sqrt(self.variances[:, self.t - 1])
        policy = self.rho_policy
        assert policy is not None
        rho_t = np.asarray(policy(self.t, self.s.copy(), rho_prev), dtype=float)
        rho_t = np.broadcast_to(rho_t, rho_prev.shape)
        if np.any(rho_t > rho_prev) or np.any(rho_t < 0.0) or not np.all(np.isfinite(rho_t)):
            raise ScheduleViolation(
                f"rho_policy returned rho_{self.t} outside [0, rho_{self.t - 1}]"
            )
        if self.t < self.horizon and np.any(rho_t <= 0.0):
            raise ScheduleViolation(f"rho_policy returned rho_{self.t} = 0 before the final round")
        # √v squared can land one ulp above v
        self.variances[:, self.t] = np.minimum(np.square(rho_t), self.variances[:, self.t - 1])
