"""
Game Service - the online linear optimization protocol

Each round the learner commits to x_t ∈ [-1, 1], the adversary reveals g_t,
and the learner observes g_t. play_batch runs n independent games in
lockstep; play is the single-game case.
"""

from dataclasses import dataclass
from typing import Callable, Dict, Protocol, Tuple, Union

import numpy as np
import structlog

from core.exceptions import GameFault
from services.adversary_service import Adversary
from utils.metrics import last_uniform_regret, record_games

logger = structlog.get_logger(__name__)

TWO_POINT_GRID_SIZE = 201

Real = Union[float, np.ndarray]
Flags = Union[bool, np.ndarray]
Responder = Callable[[int, np.ndarray], np.ndarray]


class Learner(Protocol):
    horizon: int

    @property
    def name(self) -> str: ...

    def reset(self, n_games: int = 1) -> None: ...

    def decide(self) -> np.ndarray: ...

    def observe(self, g: np.ndarray) -> None: ...


def _scalar_or_array(value: np.ndarray) -> Real:
    return float(value) if np.ndim(value) == 0 else value


@dataclass(frozen=True, eq=False)
class TranscriptBatch:
    """
    Decisions and gradients of n games, arrays of shape (n_games, T).
    """

    x: np.ndarray
    g: np.ndarray
    learner_name: str = ""
    adversary_name: str = ""

    def __post_init__(self) -> None:
        x = np.asarray(self.x, dtype=float)
        g = np.asarray(self.g, dtype=float)
        if x.shape != g.shape or x.ndim not in (1, 2) or x.shape[-1] < 1:
            raise ValueError(f"x and g must share a shape (..., T), got {x.shape} and {g.shape}")
        x.setflags(write=False)
        g.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "g", g)

    @property
    def T(self) -> int:
        return int(self.x.shape[-1])

    @property
    def loss_path(self) -> np.ndarray:
        """Running loss Σ_{i≤t} g_i x_i."""
        return np.cumsum(self.g * self.x, axis=-1)

    @property
    def s_path(self) -> np.ndarray:
        return np.cumsum(self.g, axis=-1)

    @property
    def loss_total(self) -> Real:
        return _scalar_or_array(self.loss_path[..., -1])

    @property
    def s_final(self) -> Real:
        return _scalar_or_array(self.s_path[..., -1])

    def regret_at(self, u: float) -> Real:
        """Reg_T(u) = Loss_T - u·Σg."""
        return self.loss_total - np.asarray(self.s_final) * u

    @property
    def uniform_regret(self) -> Real:
        """max(Reg(-1), Reg(1)) = Loss_T + |Σg|."""
        return self.loss_total + np.abs(self.s_final)

    def __len__(self) -> int:
        return 1 if self.x.ndim == 1 else int(self.x.shape[0])

    def transcript(self, game: int) -> "GameTranscript":
        if self.x.ndim == 1:
            if game != 0:
                raise IndexError(f"single transcript has no game {game}")
            return GameTranscript(self.x, self.g, self.learner_name, self.adversary_name)
        return GameTranscript(self.x[game], self.g[game], self.learner_name, self.adversary_name)


@dataclass(frozen=True, eq=False)
class GameTranscript(TranscriptBatch):
    """One game: x and g of shape (T,)."""

    def __post_init__(self) -> None:
        super().__post_init__()
        if self.x.ndim != 1:
            raise ValueError(f"GameTranscript holds one game, got shape {self.x.shape}")

    def summary(self) -> Dict[str, float]:
        return {
            "T": float(self.T),
            "loss_total": float(self.loss_total),
            "s_final": float(self.s_final),
            "regret_minus_one": float(self.regret_at(-1.0)),
            "regret_zero": float(self.regret_at(0.0)),
            "regret_one": float(self.regret_at(1.0)),
            "uniform_regret": float(self.uniform_regret),
        }


def _run_rounds(
    learner: Learner, respond: Responder, T: int, n_games: int, source: str
) -> TranscriptBatch:
    if T < 1:
        raise ValueError(f"horizon must be at least 1, got T={T}")
    if n_games < 1:
        raise ValueError(f"n_games must be at least 1, got {n_games}")
    if learner.horizon != T:
        raise ValueError(f"learner horizon {learner.horizon} does not match T={T}")

    learner.reset(n_games)
    xs = np.empty((n_games, T))
    gs = np.empty((n_games, T))
    for t in range(1, T + 1):
        try:
            x = np.asarray(learner.decide(), dtype=float)
            g = np.asarray(respond(t, x), dtype=float)
            if not np.all(np.isfinite(g)):
                raise ValueError("adversary produced a non-finite gradient")
            learner.observe(g)
        except Exception as exc:
            logger.error(
                "game aborted", round=t, learner=learner.name, adversary=source, error=str(exc)
            )
            raise GameFault(t, exc) from exc
        xs[:, t - 1] = x
        gs[:, t - 1] = g

    record_games(learner.name, n_games, T)
    return TranscriptBatch(xs, gs, learner.name, source)


def play_batch(
    learner: Learner,
    adversary: Adversary,
    T: int,
    n_games: int = 1,
    first_game: int = 0,
) -> TranscriptBatch:
    """
    Play n_games independent games of horizon T.

    :param learner: Learner whose horizon equals T; reset before play
    :param adversary: Gradient source
    :param T: Horizon, at least 1
    :param n_games: Number of games played in lockstep
    :param first_game: Index of the first game, selects the seeded streams
    :return: TranscriptBatch of shape (n_games, T)
    :raises GameFault: If the learner or adversary fails in some round
    """
    if T < 1 or n_games < 1:
        raise ValueError(f"play_batch needs T >= 1 and n_games >= 1, got T={T}, n_games={n_games}")
    noise = adversary.draw_noise_batch(T, n_games, first_game)
    return _run_rounds(
        learner, lambda t, x: adversary.respond(t, x, noise[:, t - 1]), T, n_games, adversary.name
    )


def play_sequences(
    learner: Learner, gradients: np.ndarray, source: str = "matrix"
) -> TranscriptBatch:
    """
    Play one game per row of a fixed gradient matrix of shape (n_games, T).
    """
    gradients = np.atleast_2d(np.asarray(gradients, dtype=float))
    n_games, T = gradients.shape
    return _run_rounds(learner, lambda t, x: gradients[:, t - 1], T, n_games, source)


def play(learner: Learner, adversary: Adversary, T: int, game: int = 0) -> GameTranscript:
    """Play one game; the seeded stream of game index `game` is used."""
    transcript = play_batch(learner, adversary, T, 1, game).transcript(0)
    last_uniform_regret.set(float(transcript.uniform_regret))
    logger.info(
        "game finished",
        learner=learner.name,
        adversary=adversary.name,
        T=T,
        loss=float(transcript.loss_total),
    )
    return transcript


def two_point_conditions(
    transcript: TranscriptBatch, a: float, b: float
) -> Tuple[Flags, Flags]:
    """
    Both sides of the two-point equivalence:
    {Loss ≤ a and Reg^unif ≤ b}  and  {Reg(u) ≤ (1-|u|)a + |u|b on the u-grid}.

    :return: Tuple (budget_side, regret_side), bools or boolean arrays
    """
    u = np.linspace(-1.0, 1.0, TWO_POINT_GRID_SIZE)
    loss = np.asarray(transcript.loss_total)
    s = np.asarray(transcript.s_final)
    budget_side = (loss <= a) & (np.asarray(transcript.uniform_regret) <= b)
    regret = loss[..., np.newaxis] - s[..., np.newaxis] * u
    regret_side = np.all(regret <= (1.0 - np.abs(u)) * a + np.abs(u) * b, axis=-1)
    if budget_side.ndim == 0:
        return bool(budget_side), bool(regret_side)
    return budget_side, regret_side


def two_point_check(transcript: TranscriptBatch, a: float, b: float) -> Flags:
    """
    True where the two sides of the two-point equivalence agree.

    :param transcript: One game or a batch
    :param a: Total-loss budget
    :param b: Uniform-regret budget
    """
    budget_side, regret_side = two_point_conditions(transcript, a, b)
    return budget_side == regret_side
