"""
Experiment Configuration - validated settings of one CLI invocation

ExperimentConfig is built from the flat key-value file merged with
command-line overrides. to_canonical() renders sorted key=value lines that
parse back to an equal model.
"""

import io
from enum import Enum
from typing import Any, Dict, Optional, Tuple

import numpy as np
from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from core.specfn import SQRT_2_OVER_PI
from core.targets import TargetKind
from services.adversary_service import Adversary, AdversaryKind, adversary_from_name
from services.tradeoff_service import EPS_RANGE_SLACK

COVER_CHECK_MAX_T = 12
STOCHASTIC_MIN_TRIALS = 1000
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


class Command(str, Enum):
    RUN = "run"
    VERIFY = "verify"
    PREFACTORS = "prefactors"
    TRADEOFF = "tradeoff"
    COVER_CHECK = "cover-check"
    STOCHASTIC = "stochastic"


class LearnerName(str, Enum):
    STEIN = "stein"
    OGD = "ogd"
    MWU = "mwu"
    COVER = "cover"


class OutputFormat(str, Enum):
    CSV = "csv"
    JSON = "json"


def format_number(value: float) -> str:
    return "%.17g" % value


def parse_grid(spec: str) -> Tuple[float, ...]:
    """
    Parse a grid given as a comma list or as start:stop:count.

    :param spec: e.g. "0.5,1,2" or "-1:1:41"
    :return: Grid values in order
    :raises ValueError: For malformed or empty grids
    """
    text = spec.strip()
    if not text:
        raise ValueError("grid is empty")
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"range grid must be start:stop:count, got '{spec}'")
        start, stop = float(parts[0]), float(parts[1])
        count = int(parts[2])
        if count < 1:
            raise ValueError(f"range grid needs count >= 1, got {count}")
        if count == 1:
            return (start,)
        return tuple(float(v) for v in np.linspace(start, stop, count))
    return tuple(float(part) for part in text.split(",") if part.strip())


def _default_eps_grid() -> Tuple[float, ...]:
    return tuple(float(v) for v in np.linspace(0.01, SQRT_2_OVER_PI, 100))


def _default_u_grid() -> Tuple[float, ...]:
    return tuple(float(v) for v in np.linspace(-1.0, 1.0, 41))


class QuadratureSettings(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    hermite_nodes: int = Field(96, ge=2, le=512)
    # Total over the 11 panels of the graded outer rule
    legendre_nodes: int = Field(121, ge=22, le=1024)


class ExperimentConfig(BaseModel):
    """
    Settings of one command. Invalid combinations are rejected with a
    message that starts with the offending field.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    command: Command = Command.RUN
    learner: LearnerName = LearnerName.STEIN
    target: TargetKind = TargetKind.ABS
    alpha: float = Field(1.0, gt=0.0)
    k: Optional[float] = Field(None, gt=0.0)
    adversary: AdversaryKind = AdversaryKind.SIGN_WORST
    adversary_param: float = 1.0
    drift: float = 0.0
    script: Tuple[float, ...] = ()
    T: int = Field(1000, ge=1)
    seed: int = Field(0, ge=0)
    trials: int = Field(1, ge=1)
    out: Optional[str] = None
    format: OutputFormat = OutputFormat.CSV
    alpha_grid: Tuple[float, ...] = (1.0,)
    u_grid: Tuple[float, ...] = Field(default_factory=_default_u_grid)
    eps_grid: Tuple[float, ...] = Field(default_factory=_default_eps_grid)
    workers: int = Field(1, ge=1)
    chunk_size: int = Field(1000, ge=1)
    force_generic: bool = False
    metrics_out: Optional[str] = None
    log_level: str = "INFO"
    quadrature: QuadratureSettings = Field(default_factory=QuadratureSettings)

    @field_validator("k", "out", "metrics_out", mode="before")
    @classmethod
    def _blank_is_none(cls, value: Any) -> Any:
        if isinstance(value, str) and not value.strip():
            return None
        return value

    @field_validator("target", "learner", "adversary", "format", mode="before")
    @classmethod
    def _lowercase_names(cls, value: Any) -> Any:
        return value.strip().lower() if isinstance(value, str) else value

    @field_validator("target")
    @classmethod
    def _named_target(cls, value: TargetKind) -> TargetKind:
        if value is TargetKind.CUSTOM:
            raise ValueError("custom targets are built in code, not configured")
        return value

    @field_validator("script", "alpha_grid", "u_grid", "eps_grid", mode="before")
    @classmethod
    def _parse_grids(cls, value: Any) -> Any:
        if isinstance(value, str):
            return parse_grid(value) if value.strip() else ()
        return value

    @field_validator("log_level", mode="before")
    @classmethod
    def _known_level(cls, value: Any) -> Any:
        level = str(value).strip().upper()
        if level not in LOG_LEVELS:
            raise ValueError(f"log_level must be one of {', '.join(LOG_LEVELS)}")
        return level

    @model_validator(mode="after")
    def _check_combinations(self) -> "ExperimentConfig":
        if self.adversary is AdversaryKind.SCRIPTED:
            if not self.script:
                raise ValueError("script: scripted adversary needs a gradient list")
            if len(self.script) < self.T:
                raise ValueError(f"script: {len(self.script)} gradients for horizon T={self.T}")
        try:
            source = self.build_adversary()
        except ValueError as exc:
            raise ValueError(f"adversary_param: {exc}") from None

        if self.learner is LearnerName.COVER and not source.is_boolean:
            raise ValueError(
                f"adversary: cover learner needs a Boolean adversary, got {source.name}"
            )
        if self.command is Command.COVER_CHECK and self.T > COVER_CHECK_MAX_T:
            raise ValueError(
                f"T: cover-check enumerates 2^T games and needs T <= {COVER_CHECK_MAX_T}"
            )
        if self.command is Command.STOCHASTIC:
            if source.is_adaptive:
                raise ValueError(
                    f"adversary: stochastic runs need an oblivious adversary, got {source.name}"
                )
            if self.learner is not LearnerName.STEIN:
                raise ValueError("learner: stochastic runs need the stein learner")
            if self.trials < STOCHASTIC_MIN_TRIALS:
                raise ValueError(f"trials: stochastic runs need at least {STOCHASTIC_MIN_TRIALS}")
        if self.command is Command.PREFACTORS and not (self.alpha_grid and self.u_grid):
            raise ValueError("alpha_grid: prefactor sweeps need nonempty alpha and u grids")
        if any(a <= 0.0 for a in self.alpha_grid):
            raise ValueError("alpha_grid: values must be positive")
        if any(abs(u) > 1.0 for u in self.u_grid):
            raise ValueError("u_grid: values must lie in [-1, 1]")
        if self.command is Command.TRADEOFF and not self.eps_grid:
            raise ValueError("eps_grid: tradeoff sweeps need a nonempty grid")
        if any(not 0.0 < e <= SQRT_2_OVER_PI * (1.0 + EPS_RANGE_SLACK) for e in self.eps_grid):
            raise ValueError("eps_grid: values must lie in (0, sqrt(2/pi)]")
        return self

    def build_adversary(self) -> Adversary:
        return adversary_from_name(
            self.adversary.value, self.adversary_param, self.drift, self.script, self.seed
        )

    @property
    def target_scale(self) -> float:
        """k when given, else alpha/√T."""
        if self.k is not None:
            return self.k
        return self.alpha / float(np.sqrt(self.T))

    def to_flat(self) -> Dict[str, str]:
        flat: Dict[str, str] = {}
        for name, value in self.model_dump().items():
            if name == "quadrature":
                for key, nested in value.items():
                    flat[f"quadrature.{key}"] = str(nested)
            elif value is None:
                flat[name] = ""
            elif isinstance(value, Enum):
                flat[name] = str(value.value)
            elif isinstance(value, bool):
                flat[name] = "true" if value else "false"
            elif isinstance(value, float):
                flat[name] = format_number(value)
            elif isinstance(value, tuple):
                flat[name] = ",".join(format_number(v) for v in value)
            else:
                flat[name] = str(value)
        return flat

    def to_canonical(self) -> str:
        """Sorted key=value lines, one per setting."""
        flat = self.to_flat()
        return "".join(f"{key}={flat[key]}\n" for key in sorted(flat))

    @classmethod
    def from_flat(cls, flat: Dict[str, Optional[str]]) -> "ExperimentConfig":
        nested: Dict[str, Any] = {}
        for key, value in flat.items():
            if value is None:
                continue
            if key.startswith("quadrature."):
                nested.setdefault("quadrature", {})[key.split(".", 1)[1]] = value
            else:
                nested[key] = value
        return cls.model_validate(nested)

    @classmethod
    def from_canonical(cls, text: str) -> "ExperimentConfig":
        return cls.from_flat(dict(dotenv_values(stream=io.StringIO(text), interpolate=False)))
