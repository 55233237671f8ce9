"""
Stochastic Service - Monte Carlo check of the in-expectation loss bound

Against an oblivious random adversary the Stein learner satisfies

    E[Loss_T] ≤ -E[h(S_T + ρ_T Z)] + E[h(ρ_0 Z)]
                + Σ_t √(2/π)·max(C_t - c_t, 0)/ρ_{t-1} + (2c_t E|G_t| + E|G_t|³)/ρ²_{t-1}

with C_t = E[G_t²]. The E[h(...)] term on the right is estimated from the
same trials, so the check compares the mean of Loss_i + h(S_i) to the
deterministic remainder with a 3-sigma allowance.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import List, Optional, Tuple

import numpy as np
import structlog

from core.olo import SteinLearner
from core.specfn import SQRT_2_OVER_PI
from services.adversary_service import Adversary, GradientMoments
from services.game_service import play_batch

logger = structlog.get_logger(__name__)

MIN_TRIALS = 1000
DEFAULT_CHUNK_SIZE = 1000
SIGMA_ALLOWANCE = 3.0


@dataclass(frozen=True)
class StochasticResult:
    """
    :param mean_loss: Average Loss_T over trials
    :param stderr: Standard error of the mean of Loss_i + h(S_i)
    :param bound_rhs: Plug-in right-hand side
    :param smoothed_final: Average of E_Z[h(S_i + ρ_T Z)]
    :param error_sum: Moment error terms summed over rounds
    :param moments: "analytic" or "plugin"
    """

    mean_loss: float
    stderr: float
    bound_rhs: float
    smoothed_final: float
    error_sum: float
    n_trials: int
    T: int
    learner: str
    adversary: str
    moments: str

    @property
    def holds(self) -> bool:
        return self.mean_loss <= self.bound_rhs + SIGMA_ALLOWANCE * self.stderr

    @property
    def margin(self) -> float:
        return self.bound_rhs + SIGMA_ALLOWANCE * self.stderr - self.mean_loss


@dataclass
class _ChunkOutcome:
    loss: np.ndarray
    s_final: np.ndarray
    g_squared: np.ndarray
    g_abs: np.ndarray
    g_abs_cubed: np.ndarray


def _run_chunk(
    learner: SteinLearner, adversary: Adversary, T: int, first: int, size: int
) -> _ChunkOutcome:
    batch = play_batch(learner.clone(), adversary, T, size, first)
    abs_g = np.abs(batch.g)
    return _ChunkOutcome(
        loss=np.asarray(batch.loss_total),
        s_final=np.asarray(batch.s_final),
        g_squared=np.sum(abs_g * abs_g, axis=0),
        g_abs=np.sum(abs_g, axis=0),
        g_abs_cubed=np.sum(abs_g**3, axis=0),
    )


def moment_error_terms(
    variances: np.ndarray,
    second: np.ndarray,
    abs_first: np.ndarray,
    abs_third: np.ndarray,
    convex: bool = True,
) -> np.ndarray:
    """
    Per-round error terms of the in-expectation bound.

    :param variances: ρ²_0, ..., ρ²_T
    :param second: E[G_t²] per round (or a scalar)
    :param abs_first: E|G_t| per round
    :param abs_third: E|G_t|³ per round
    :param convex: False uses |C_t - c_t|
    :return: Array of T terms
    """
    variance_prev = variances[:-1]
    increment = variance_prev - variances[1:]
    gap = second - increment
    first = np.maximum(gap, 0.0) if convex else np.abs(gap)
    return SQRT_2_OVER_PI * first / np.sqrt(variance_prev) + (
        2.0 * increment * abs_first + abs_third
    ) / variance_prev


def run_stochastic(
    learner: SteinLearner,
    adversary: Adversary,
    T: int,
    n_trials: int,
    seed: int,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    workers: int = 1,
    moments: Optional[GradientMoments] = None,
) -> StochasticResult:
    """
    Monte Carlo estimate of E[Loss_T] against the expectation bound.

    :param learner: Stein learner with a fixed schedule of horizon T
    :param adversary: Oblivious random adversary; its seed is replaced by `seed`
    :param T: Horizon
    :param n_trials: Number of trials, at least 1000
    :param seed: Seed of the trial streams
    :param chunk_size: Trials per batch
    :param workers: Threads; results are reduced in chunk order
    :param moments: Override for the per-round moments
    :return: StochasticResult
    """
    if n_trials < MIN_TRIALS:
        raise ValueError(f"run_stochastic needs at least {MIN_TRIALS} trials, got {n_trials}")
    if adversary.is_adaptive:
        raise ValueError(f"adversary {adversary.name} adapts to the learner")
    if learner.schedule is None:
        raise ValueError("run_stochastic needs a learner with a fixed schedule")
    if learner.horizon != T:
        raise ValueError(f"learner horizon {learner.horizon} does not match T={T}")
    if chunk_size < 1 or workers < 1:
        raise ValueError("chunk_size and workers must be positive")

    adversary = replace(adversary, rng_seed=seed)
    h = learner.target
    variances = learner.schedule.variances
    spans: List[Tuple[int, int]] = [
        (start, min(chunk_size, n_trials - start)) for start in range(0, n_trials, chunk_size)
    ]
    logger.info(
        "stochastic run started",
        learner=learner.name,
        adversary=adversary.name,
        T=T,
        trials=n_trials,
        chunks=len(spans),
        workers=workers,
    )

    if workers == 1:
        outcomes = [_run_chunk(learner, adversary, T, first, size) for first, size in spans]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(
                pool.map(lambda span: _run_chunk(learner, adversary, T, *span), spans)
            )

    loss = np.concatenate([o.loss for o in outcomes])
    s_final = np.concatenate([o.s_final for o in outcomes])

    rho_final = math.sqrt(float(variances[-1]))
    if rho_final == 0.0:
        smoothed = np.asarray(h.evaluate(s_final), dtype=float)
    else:
        smoothed = np.array([h.gaussian_expectation(float(s), rho_final) for s in s_final])

    if moments is None:
        moments = adversary.moments()
    if moments is not None:
        source = "analytic"
        second, abs_first, abs_third = moments.second, moments.abs_first, moments.abs_third
    else:
        source = "plugin"
        second = sum(o.g_squared for o in outcomes) / n_trials
        abs_first = sum(o.g_abs for o in outcomes) / n_trials
        abs_third = sum(o.g_abs_cubed for o in outcomes) / n_trials
    if np.any(np.asarray(second) > 1.0):
        logger.warning("adversary second moment exceeds one", adversary=adversary.name)

    terms = moment_error_terms(
        variances, np.asarray(second), np.asarray(abs_first), np.asarray(abs_third), h.convex
    )
    error_sum = float(np.sum(terms))
    constant = h.gaussian_expectation(0.0, math.sqrt(float(variances[0])))
    paired = loss + smoothed
    stderr = float(np.std(paired, ddof=1) / math.sqrt(n_trials))

    result = StochasticResult(
        mean_loss=float(np.mean(loss)),
        stderr=stderr,
        bound_rhs=float(-np.mean(smoothed) + constant + error_sum),
        smoothed_final=float(np.mean(smoothed)),
        error_sum=error_sum,
        n_trials=n_trials,
        T=T,
        learner=learner.name,
        adversary=adversary.name,
        moments=source,
    )
    if result.holds:
        logger.info("stochastic run finished", margin=result.margin, moments=source)
    else:
        logger.warning("expectation bound violated", margin=result.margin, moments=source)
    return result
