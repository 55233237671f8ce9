"""
Adversary Service - gradient sources for the online game

Each game draws its randomness up front from a generator seeded by
(rng_seed, game index), so a game replays identically no matter how games
are batched or distributed across workers.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import integrate

from core.specfn import normal_cdf, normal_pdf

# Mixed into every seed sequence so game streams differ from other seeded uses
SEED_SALT = 0x5EED0D0


class AdversaryKind(str, Enum):
    SIGN_WORST = "sign_worst"
    RADEMACHER_IID = "rademacher_iid"
    BERNOULLI_BIASED = "bernoulli_biased"
    DRIFT = "drift"
    UNIFORM_BOX = "uniform_box"
    GAUSSIAN_NOISY = "gaussian_noisy"
    SCRIPTED = "scripted"


BOOLEAN_KINDS = frozenset(
    {AdversaryKind.SIGN_WORST, AdversaryKind.RADEMACHER_IID, AdversaryKind.BERNOULLI_BIASED}
)
OBLIVIOUS_RANDOM_KINDS = frozenset(
    {
        AdversaryKind.RADEMACHER_IID,
        AdversaryKind.BERNOULLI_BIASED,
        AdversaryKind.DRIFT,
        AdversaryKind.UNIFORM_BOX,
        AdversaryKind.GAUSSIAN_NOISY,
    }
)


@dataclass(frozen=True)
class GradientMoments:
    """Per-round E[G²], E|G| and E|G|³ of an i.i.d. gradient law."""

    second: float
    abs_first: float
    abs_third: float


@dataclass(frozen=True)
class Adversary:
    """
    Gradient source.

    :param kind: Adversary family
    :param param: p for bernoulli_biased, g for drift, half-width for
        uniform_box, noise scale for gaussian_noisy
    :param drift: Base drift of gaussian_noisy
    :param script: Gradients of the scripted kind, one per round
    :param rng_seed: Nonnegative seed
    """

    kind: AdversaryKind
    param: float = 1.0
    drift: float = 0.0
    script: Tuple[float, ...] = ()
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.rng_seed < 0:
            raise ValueError(f"rng_seed must be nonnegative, got {self.rng_seed}")
        if self.kind is AdversaryKind.BERNOULLI_BIASED and not 0.0 <= self.param <= 1.0:
            raise ValueError(f"bernoulli_biased needs p in [0, 1], got {self.param}")
        if self.kind is AdversaryKind.UNIFORM_BOX and not self.param > 0.0:
            raise ValueError(f"uniform_box needs a positive half-width, got {self.param}")
        if self.kind is AdversaryKind.GAUSSIAN_NOISY and self.param < 0.0:
            raise ValueError(f"gaussian_noisy needs a nonnegative noise scale, got {self.param}")
        if self.kind is AdversaryKind.SCRIPTED and not self.script:
            raise ValueError("scripted adversary needs a nonempty script")
        if not all(math.isfinite(g) for g in self.script):
            raise ValueError("script contains non-finite gradients")

    @property
    def name(self) -> str:
        if self.kind in (AdversaryKind.SIGN_WORST, AdversaryKind.RADEMACHER_IID):
            return self.kind.value
        if self.kind is AdversaryKind.SCRIPTED:
            return f"scripted[{len(self.script)}]"
        if self.kind is AdversaryKind.GAUSSIAN_NOISY:
            return f"gaussian_noisy(drift={self.drift:g},scale={self.param:g})"
        return f"{self.kind.value}({self.param:g})"

    @property
    def is_boolean(self) -> bool:
        if self.kind is AdversaryKind.SCRIPTED:
            return all(g in (-1.0, 1.0) for g in self.script)
        if self.kind is AdversaryKind.DRIFT:
            return abs(self.param) == 1.0
        return self.kind in BOOLEAN_KINDS

    @property
    def is_bounded(self) -> bool:
        if self.kind is AdversaryKind.GAUSSIAN_NOISY:
            return self.param == 0.0 and abs(self.drift) <= 1.0
        if self.kind is AdversaryKind.SCRIPTED:
            return all(abs(g) <= 1.0 for g in self.script)
        if self.kind in (AdversaryKind.DRIFT, AdversaryKind.UNIFORM_BOX):
            return abs(self.param) <= 1.0
        return True

    @property
    def is_adaptive(self) -> bool:
        return self.kind is AdversaryKind.SIGN_WORST

    def generator(self, game_index: int) -> np.random.Generator:
        """Independent generator for one game."""
        sequence = np.random.SeedSequence(entropy=(self.rng_seed, game_index, SEED_SALT))
        return np.random.Generator(np.random.PCG64(sequence))

    def draw_noise(self, T: int, game_index: int) -> np.ndarray:
        """
        Pre-draw the randomness of one game.

        :param T: Horizon
        :param game_index: Index of the game within the run
        :return: Array of T values consumed by respond()
        """
        if self.kind not in OBLIVIOUS_RANDOM_KINDS or self.kind is AdversaryKind.DRIFT:
            return np.zeros(T)
        rng = self.generator(game_index)
        if self.kind is AdversaryKind.RADEMACHER_IID:
            return 2.0 * rng.integers(0, 2, size=T).astype(float) - 1.0
        if self.kind is AdversaryKind.BERNOULLI_BIASED:
            return np.where(rng.random(T) < self.param, 1.0, -1.0)
        if self.kind is AdversaryKind.UNIFORM_BOX:
            return rng.uniform(-self.param, self.param, size=T)
        return self.drift + self.param * rng.standard_normal(T)

    def draw_noise_batch(self, T: int, n_games: int, first_game: int = 0) -> np.ndarray:
        """Noise of games first_game .. first_game + n_games - 1, shape (n_games, T)."""
        if self.kind not in OBLIVIOUS_RANDOM_KINDS or self.kind is AdversaryKind.DRIFT:
            return np.zeros((n_games, T))
        return np.stack([self.draw_noise(T, first_game + i) for i in range(n_games)])

    def respond(self, t: int, x: np.ndarray, noise: np.ndarray) -> np.ndarray:
        """
        Gradients of round t given the learners' decisions.

        :param t: Round in [1, T]
        :param x: Decisions, one per game
        :param noise: Pre-drawn noise of round t, one per game
        :return: Gradients, one per game
        """
        if self.kind is AdversaryKind.SIGN_WORST:
            return np.where(np.asarray(x) >= 0.0, 1.0, -1.0)
        if self.kind is AdversaryKind.DRIFT:
            return np.full(np.shape(x), float(self.param))
        if self.kind is AdversaryKind.SCRIPTED:
            if t > len(self.script):
                raise ValueError(f"script has {len(self.script)} gradients, round {t} requested")
            return np.full(np.shape(x), float(self.script[t - 1]))
        return np.asarray(noise, dtype=float)

    def moments(self) -> Optional[GradientMoments]:
        """
        Moments of the i.i.d. gradient law, None for adaptive or scripted kinds.
        """
        if self.kind in (AdversaryKind.RADEMACHER_IID, AdversaryKind.BERNOULLI_BIASED):
            return GradientMoments(1.0, 1.0, 1.0)
        if self.kind is AdversaryKind.DRIFT:
            g = abs(self.param)
            return GradientMoments(g * g, g, g**3)
        if self.kind is AdversaryKind.UNIFORM_BOX:
            w = self.param
            return GradientMoments(w * w / 3.0, w / 2.0, w**3 / 4.0)
        if self.kind is AdversaryKind.GAUSSIAN_NOISY:
            return _gaussian_moments(self.drift, self.param)
        return None


def _gaussian_moments(mean: float, scale: float) -> GradientMoments:
    if scale == 0.0:
        g = abs(mean)
        return GradientMoments(g * g, g, g**3)
    z = mean / scale
    folded = mean * (2.0 * normal_cdf(z) - 1.0) + 2.0 * scale * normal_pdf(z)
    third, _ = integrate.quad(
        lambda v: abs(mean + scale * v) ** 3 * float(normal_pdf(v)),
        -40.0,
        40.0,
        points=[-z] if abs(z) < 40.0 else None,
        epsabs=1e-12,
        limit=200,
    )
    return GradientMoments(mean * mean + scale * scale, float(folded), float(third))


def scripted(gradients: Sequence[float]) -> Adversary:
    return Adversary(AdversaryKind.SCRIPTED, script=tuple(float(g) for g in gradients))


def adversary_from_name(
    name: str,
    param: float = 1.0,
    drift: float = 0.0,
    script: Sequence[float] = (),
    seed: int = 0,
) -> Adversary:
    """
    Resolve a CLI adversary name.

    :raises ValueError: For unknown names
    """
    try:
        kind = AdversaryKind(name)
    except ValueError:
        known = ", ".join(k.value for k in AdversaryKind)
        raise ValueError(f"unknown adversary '{name}', expected one of {known}") from None
    return Adversary(kind, float(param), float(drift), tuple(float(g) for g in script), int(seed))
