"""
Bound Service - pathwise loss bounds of the Stein learner

For any transcript and the schedule the learner used,

    Loss_T ≤ -E[h(Σg + ρ_T Z)] + E[h(ρ_0 Z)]
             + Σ_t √(2/π)·max(g_t² - c_t, 0)/ρ_{t-1} + (2c_t|g_t| + |g_t|³)/ρ²_{t-1},

with |g_t² - c_t| in place of the max for nonconvex targets. The ledger
keeps both pieces so that the split can be reported.
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
import structlog

from core.baselines import rademacher_expectation
from core.olo import RhoSchedule
from core.specfn import SQRT_2_OVER_PI
from core.targets import TargetFunction
from services.game_service import TranscriptBatch
from utils.metrics import record_violations

logger = structlog.get_logger(__name__)

PATHWISE_SLACK = 1e-6
DUALITY_GRID_SIZE = 201

Real = Union[float, np.ndarray]
ScheduleLike = Union[RhoSchedule, np.ndarray]


def _scalar_or_array(value: np.ndarray) -> Real:
    return float(value) if np.ndim(value) == 0 else value


@dataclass(frozen=True, eq=False)
class BoundLedger:
    """
    Pieces of the pathwise bound.

    :param psi_bar_term: -E[h(Σg + ρ_T Z)] + E[h(ρ_0 Z)], one per game
    :param err_terms: Per-round error summands, shape (..., T, 2)
    :param convex_mode: True for the max{g² - c, 0} form
    """

    psi_bar_term: Real
    err_terms: np.ndarray
    convex_mode: bool

    @property
    def err_total(self) -> Real:
        return _scalar_or_array(np.sum(self.err_terms, axis=(-2, -1)))

    @property
    def total(self) -> Real:
        return self.psi_bar_term + self.err_total

    @property
    def first_component_total(self) -> Real:
        return _scalar_or_array(np.sum(self.err_terms[..., 0], axis=-1))


def _variances(schedule: ScheduleLike) -> np.ndarray:
    if isinstance(schedule, RhoSchedule):
        return schedule.variances
    return np.asarray(schedule, dtype=float)


def pathwise_bound(
    transcript: TranscriptBatch,
    schedule: ScheduleLike,
    h: TargetFunction,
    convex_mode: Optional[bool] = None,
) -> BoundLedger:
    """
    Pathwise bound ledger for one game or a batch.

    :param transcript: Game(s) with T rounds
    :param schedule: RhoSchedule shared by all games, or variances of shape
        (T + 1,) or (n_games, T + 1)
    :param h: Target the learner played with
    :param convex_mode: Error form; defaults to h.convex
    :return: BoundLedger
    :raises ValueError: If the schedule length does not match the transcript
    """
    variances = _variances(schedule)
    T = transcript.T
    if variances.shape[-1] != T + 1:
        raise ValueError(
            f"schedule has {variances.shape[-1] - 1} rounds, transcript has T={T}"
        )
    if variances.ndim == 2 and transcript.x.ndim == 2 and variances.shape[0] != len(transcript):
        raise ValueError(
            f"schedule covers {variances.shape[0]} games, transcript has {len(transcript)}"
        )
    if convex_mode is None:
        convex_mode = h.convex

    g = transcript.g
    if variances.ndim == 2 and transcript.x.ndim == 1:
        variances = variances[0]
    variance_prev = variances[..., :-1]
    increment = variance_prev - variances[..., 1:]
    rho_prev = np.sqrt(variance_prev)
    g_squared = g * g
    abs_g = np.abs(g)

    if convex_mode:
        first = SQRT_2_OVER_PI * np.maximum(g_squared - increment, 0.0) / rho_prev
    else:
        first = SQRT_2_OVER_PI * np.abs(g_squared - increment) / rho_prev
    second = (2.0 * increment * abs_g + abs_g * g_squared) / variance_prev
    err_terms = np.stack(np.broadcast_arrays(first, second), axis=-1)

    s_final = np.atleast_1d(np.asarray(transcript.s_final, dtype=float))
    rho_final = np.broadcast_to(np.sqrt(variances[..., -1]), s_final.shape)
    rho_initial = np.broadcast_to(np.sqrt(variances[..., 0]), s_final.shape)
    psi_bar = np.array(
        [
            -_smoothed(h, s, r_end) + h.gaussian_expectation(0.0, r_start)
            for s, r_end, r_start in zip(s_final, rho_final, rho_initial)
        ]
    )
    if transcript.x.ndim == 1:
        return BoundLedger(float(psi_bar[0]), err_terms, bool(convex_mode))
    return BoundLedger(psi_bar, err_terms, bool(convex_mode))


def _smoothed(h: TargetFunction, s: float, rho: float) -> float:
    """E[h(s + ρZ)], short-circuiting to h(s) at ρ = 0."""
    if rho == 0.0:
        return float(h.evaluate(float(s)))
    return h.gaussian_expectation(float(s), float(rho))


def pathwise_violations(
    transcript: TranscriptBatch, ledger: BoundLedger, slack: float = PATHWISE_SLACK
) -> np.ndarray:
    """
    Indices of games with Loss_T > total + slack; violations are counted
    in the metrics registry.
    """
    excess = np.atleast_1d(np.asarray(transcript.loss_total) - np.asarray(ledger.total))
    bad = np.flatnonzero(excess > slack)
    if bad.size:
        logger.warning(
            "pathwise bound violated",
            games=int(bad.size),
            worst_excess=float(np.max(excess)),
            learner=transcript.learner_name,
            adversary=transcript.adversary_name,
        )
        record_violations("pathwise", int(bad.size))
    return bad


@dataclass(frozen=True)
class DualityReport:
    """max_u [Reg(u) - h*(-u)] - (E[h(ρ_0 Z)] + err total), worst over games."""

    max_excess: float
    worst_u: float

    @property
    def ok(self) -> bool:
        return self.max_excess <= PATHWISE_SLACK


def regret_duality_check(
    transcript: TranscriptBatch,
    ledger: BoundLedger,
    h: TargetFunction,
    schedule: ScheduleLike,
    u_grid: Optional[Sequence[float]] = None,
) -> DualityReport:
    """
    Comparator-wise form of the pathwise bound with ρ_T = 0:
    Reg(u) ≤ h*(-u) + E[h(ρ_0 Z)] + err_T for every u on the grid.

    :param transcript: Game(s) played against a schedule ending at ρ_T = 0
    :param ledger: Ledger from pathwise_bound on the same games
    :param h: Convex target
    :param schedule: The schedule the ledger was built with
    :param u_grid: Comparators in [-1, 1]; 201 points by default
    :return: DualityReport
    """
    u = np.linspace(-1.0, 1.0, DUALITY_GRID_SIZE) if u_grid is None else np.asarray(u_grid)
    variances = _variances(schedule)
    rho_initial = np.sqrt(np.atleast_1d(variances[..., 0]))
    base = np.array([h.gaussian_expectation(0.0, float(r)) for r in rho_initial])
    constant = np.atleast_1d(base + np.asarray(ledger.err_total))

    conjugate = np.array([h.conjugate_at_neg(float(v)) for v in u])
    loss = np.atleast_1d(np.asarray(transcript.loss_total))
    s = np.atleast_1d(np.asarray(transcript.s_final))
    regret = loss[:, np.newaxis] - s[:, np.newaxis] * u
    excess = regret - conjugate - constant[:, np.newaxis]
    game, column = np.unravel_index(int(np.argmax(excess)), excess.shape)
    report = DualityReport(float(excess[game, column]), float(u[column]))
    if not report.ok:
        logger.warning("regret duality violated", excess=report.max_excess, u=report.worst_u)
        record_violations("duality", 1)
    return report


def lower_bound_value(h: TargetFunction, T: int, sum_g: float) -> float:
    """-h(Σg) + E[h(√T Z)], the adversary's guarantee up to a constant."""
    return -float(h.evaluate(sum_g)) + h.gaussian_expectation(0.0, float(np.sqrt(T)))


def rademacher_lower_bound_value(h: TargetFunction, T: int, sum_g: float) -> float:
    """-h(Σg) + E[h(X)] with X a sum of T fair ±1 coins."""
    return -float(h.evaluate(sum_g)) + rademacher_expectation(
        lambda x: np.asarray(h.evaluate(x)), T
    )
