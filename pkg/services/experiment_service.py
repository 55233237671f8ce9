"""
Experiment Service - the commands behind the CLI

Each cmd_* method turns a validated ExperimentConfig into a table (one
pandas DataFrame with stable columns) plus a summary block. write() emits
both as CSV or JSON. Bound checks report the number of violations instead
of raising, so the CLI can map them to their own exit code.
"""

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Union

import numpy as np
import pandas as pd
import structlog

from config.experiment_config import Command, ExperimentConfig, LearnerName, OutputFormat
from core.baselines import CoverLearner, CoverSpec, MWULearner, OGDLearner, centered_potential
from core.olo import SteinLearner, effective_learning_rate, rho_sqrt_horizon
from core.targets import TargetFunction, TargetKind, target_from_name
from services.bound_service import (
    PATHWISE_SLACK,
    lower_bound_value,
    pathwise_violations,
    regret_duality_check,
    pathwise_bound,
)
from services.game_service import TranscriptBatch, play, play_batch, play_sequences
from services.stochastic_service import run_stochastic
from services.tradeoff_service import (
    baseline_prefactor,
    baseline_tradeoff,
    gamma_mwu,
    gamma_ogd,
    prefactors,
    solve_gamma_eps,
)
from utils.metrics import record_violations
from utils.output_writer import OutputDocument, write_csv, write_json

RUN_COLUMNS = ["t", "x", "g", "s", "loss"]
VERIFY_COLUMNS = [
    "game",
    "loss",
    "s_final",
    "uniform_regret",
    "psi_bar_term",
    "err_total",
    "bound_total",
    "slack",
]
BASELINE_VERIFY_COLUMNS = ["game", "loss", "s_final", "uniform_regret", "worst_excess"]
PREFACTOR_COLUMNS = [
    "u",
    "alpha",
    "gamma_huber",
    "gamma_ogd",
    "gamma_lse",
    "gamma_mwu",
    "gamma_sth",
    "gap_ogd",
    "gap_mwu",
    "reference",
]
TRADEOFF_COLUMNS = [
    "eps",
    "gamma",
    "alpha",
    "residual",
    "baseline_prefactor",
    "gamma_bound",
    "baseline_bound",
]
COVER_COLUMNS = ["sequence", "s_final", "loss", "bound", "slack"]
STOCHASTIC_COLUMNS = ["mean_loss", "stderr", "bound_rhs", "smoothed_final", "error_sum", "margin"]

COVER_SLACK = 1e-9
BASELINE_SLACK = 1e-9

Learner = Union[SteinLearner, OGDLearner, MWULearner, CoverLearner]


@dataclass
class CommandResult:
    command: str
    table: pd.DataFrame
    summary: Dict[str, float] = field(default_factory=dict)
    violations: int = 0


class ExperimentService:
    """
    Builds targets, learners and adversaries from an ExperimentConfig and
    runs one command.
    """

    def __init__(self, settings: ExperimentConfig):
        self.logger = structlog.get_logger(self.__class__.__name__)
        self.settings = settings

    def build_target(self) -> TargetFunction:
        if self.settings.target is TargetKind.ABS:
            return target_from_name("abs")
        return target_from_name(self.settings.target.value, self.settings.target_scale)

    def build_learner(self) -> Learner:
        s = self.settings
        if s.learner is LearnerName.OGD:
            return OGDLearner(s.alpha, s.T)
        if s.learner is LearnerName.MWU:
            return MWULearner(s.alpha, s.T)
        if s.learner is LearnerName.COVER:
            return self._cover_learner()
        return SteinLearner(
            self.build_target(),
            schedule=rho_sqrt_horizon(s.T),
            force_generic=s.force_generic,
            hermite_nodes=s.quadrature.hermite_nodes,
            legendre_nodes=s.quadrature.legendre_nodes,
        )

    def _cover_learner(self) -> CoverLearner:
        target = self.build_target()
        T = self.settings.T
        return CoverLearner(CoverSpec.build(T, centered_potential(target, T)))

    def execute(self) -> CommandResult:
        handlers: Dict[Command, Callable[[], CommandResult]] = {
            Command.RUN: self.cmd_run,
            Command.VERIFY: self.cmd_verify,
            Command.PREFACTORS: self.cmd_prefactors,
            Command.TRADEOFF: self.cmd_tradeoff,
            Command.COVER_CHECK: self.cmd_cover_check,
            Command.STOCHASTIC: self.cmd_stochastic,
        }
        self.logger.info(
            "command started",
            command=self.settings.command.value,
            learner=self.settings.learner.value,
            adversary=self.settings.adversary.value,
            T=self.settings.T,
        )
        result = handlers[self.settings.command]()
        if result.violations:
            self.logger.warning(
                "bound violations detected", command=result.command, violations=result.violations
            )
        else:
            self.logger.info("command finished", command=result.command, rows=len(result.table))
        return result

    def cmd_run(self) -> CommandResult:
        """
        One game: per-round rows (t, x, g, s, loss) and the regret summary.
        Huber learners add the effective learning rate of each round.
        """
        s = self.settings
        learner = self.build_learner()
        transcript = play(learner, s.build_adversary(), s.T)

        table = pd.DataFrame(
            {
                "t": np.arange(1, s.T + 1),
                "x": transcript.x,
                "g": transcript.g,
                "s": transcript.s_path,
                "loss": transcript.loss_path,
            },
            columns=RUN_COLUMNS,
        )
        summary = transcript.summary()
        if isinstance(learner, SteinLearner):
            target = learner.target
            if target.kind is TargetKind.HUBER:
                remaining = learner.realized_schedule().rho[1:]
                table["effective_lr"] = [
                    effective_learning_rate(target.scale_value, float(r)) for r in remaining
                ]
            ledger = pathwise_bound(transcript, learner.realized_schedule(), target)
            summary.update(
                {
                    "psi_bar_term": float(ledger.psi_bar_term),
                    "err_total": float(ledger.err_total),
                    "bound_total": float(ledger.total),
                    "lower_bound": lower_bound_value(target, s.T, float(transcript.s_final)),
                }
            )
        return CommandResult(s.command.value, table, summary)

    def _stein_verify(self, learner: SteinLearner) -> CommandResult:
        s = self.settings
        adversary = s.build_adversary()
        schedule = learner.realized_schedule()
        frames: List[pd.DataFrame] = []
        violations = 0
        worst_duality = -math.inf
        for first in range(0, s.trials, s.chunk_size):
            size = min(s.chunk_size, s.trials - first)
            batch = play_batch(learner, adversary, s.T, size, first)
            ledger = pathwise_bound(batch, schedule, learner.target)
            violations += int(pathwise_violations(batch, ledger).size)
            if learner.target.convex and schedule.variances[-1] == 0.0:
                report = regret_duality_check(batch, ledger, learner.target, schedule)
                worst_duality = max(worst_duality, report.max_excess)
                violations += 0 if report.ok else 1
            total = np.asarray(ledger.total)
            frames.append(
                pd.DataFrame(
                    {
                        "game": np.arange(first, first + size),
                        "loss": np.asarray(batch.loss_total),
                        "s_final": np.asarray(batch.s_final),
                        "uniform_regret": np.asarray(batch.uniform_regret),
                        "psi_bar_term": np.asarray(ledger.psi_bar_term),
                        "err_total": np.asarray(ledger.err_total),
                        "bound_total": total,
                        "slack": total - np.asarray(batch.loss_total),
                    },
                    columns=VERIFY_COLUMNS,
                )
            )
        table = pd.concat(frames, ignore_index=True)
        summary = {
            "games": float(s.trials),
            "violations": float(violations),
            "min_slack": float(table["slack"].min()),
            "tolerance": PATHWISE_SLACK,
            "duality_max_excess": worst_duality,
        }
        return CommandResult(s.command.value, table, summary, violations)

    def _baseline_verify(self, learner: Union[OGDLearner, MWULearner]) -> CommandResult:
        s = self.settings
        prefactor = gamma_ogd if isinstance(learner, OGDLearner) else gamma_mwu
        u = np.asarray(s.u_grid)
        allowance = np.array([prefactor(float(v), s.alpha) for v in u]) * math.sqrt(s.T)
        batch = play_batch(learner, s.build_adversary(), s.T, s.trials)
        loss = np.atleast_1d(np.asarray(batch.loss_total))
        total = np.atleast_1d(np.asarray(batch.s_final))
        regret = loss[:, np.newaxis] - total[:, np.newaxis] * u
        worst = np.max(regret - allowance, axis=1)
        violations = int(np.sum(worst > BASELINE_SLACK))
        record_violations("baseline_regret", violations)
        table = pd.DataFrame(
            {
                "game": np.arange(s.trials),
                "loss": loss,
                "s_final": total,
                "uniform_regret": np.atleast_1d(np.asarray(batch.uniform_regret)),
                "worst_excess": worst,
            },
            columns=BASELINE_VERIFY_COLUMNS,
        )
        summary = {
            "games": float(s.trials),
            "violations": float(violations),
            "max_excess": float(np.max(worst)),
        }
        return CommandResult(s.command.value, table, summary, violations)

    def _cover_table(self, learner: CoverLearner, batch: TranscriptBatch) -> CommandResult:
        psi_star = learner.spec.psi_star
        loss = np.atleast_1d(np.asarray(batch.loss_total))
        total = np.atleast_1d(np.asarray(batch.s_final))
        bound = -np.asarray(psi_star(-total), dtype=float)
        slack = bound - loss
        violations = int(np.sum(slack < -COVER_SLACK))
        if abs(learner.spec.achievability) > 1e-12:
            violations += 1
        record_violations("cover", violations)
        table = pd.DataFrame(
            {
                "sequence": np.arange(len(loss)),
                "s_final": total,
                "loss": loss,
                "bound": bound,
                "slack": slack,
            },
            columns=COVER_COLUMNS,
        )
        summary = {
            "sequences": float(len(loss)),
            "achievability": learner.spec.achievability,
            "violations": float(violations),
            "min_slack": float(np.min(slack)),
        }
        return CommandResult(self.settings.command.value, table, summary, violations)

    def cmd_verify(self) -> CommandResult:
        """
        Play `trials` seeded games and check the learner's guarantee on each:
        the pathwise ledger for Stein learners, Reg(u) ≤ γ(u, α)√T on the
        u-grid for OGD and MWU, Loss ≤ -ψ*(-Σg) for Cover.
        """
        learner = self.build_learner()
        if isinstance(learner, SteinLearner):
            return self._stein_verify(learner)
        if isinstance(learner, CoverLearner):
            s = self.settings
            batch = play_batch(learner, s.build_adversary(), s.T, s.trials)
            return self._cover_table(learner, batch)
        return self._baseline_verify(learner)

    def cmd_prefactors(self) -> CommandResult:
        """Prefactor table over alpha_grid x u_grid."""
        rows = [
            prefactors(u, alpha).to_dict()
            for alpha in self.settings.alpha_grid
            for u in self.settings.u_grid
        ]
        table = pd.DataFrame(rows, columns=PREFACTOR_COLUMNS)
        summary = {
            "rows": float(len(table)),
            "min_gap_ogd": float(table["gap_ogd"].min()),
            "min_gap_mwu": float(table["gap_mwu"].min()),
        }
        return CommandResult(self.settings.command.value, table, summary)

    def cmd_tradeoff(self) -> CommandResult:
        """γ(ε) against the comparison learner's prefactor over eps_grid."""
        root_t = math.sqrt(self.settings.T)
        rows = []
        for eps in self.settings.eps_grid:
            point = solve_gamma_eps(eps)
            rows.append(
                {
                    "eps": point.eps,
                    "gamma": point.gamma,
                    "alpha": point.alpha,
                    "residual": point.residual,
                    "baseline_prefactor": baseline_prefactor(point.eps),
                    "gamma_bound": point.gamma * root_t,
                    "baseline_bound": baseline_tradeoff(point.eps, self.settings.T),
                }
            )
        table = pd.DataFrame(rows, columns=TRADEOFF_COLUMNS)
        summary = {
            "points": float(len(table)),
            "max_residual": float(table["residual"].max()),
            "min_baseline_margin": float((table["baseline_prefactor"] - table["gamma"]).min()),
        }
        return CommandResult(self.settings.command.value, table, summary)

    def cmd_cover_check(self) -> CommandResult:
        """Cover's learner on all 2^T sign sequences."""
        T = self.settings.T
        learner = self._cover_learner()
        sequences = np.array(list(itertools.product((-1.0, 1.0), repeat=T)))
        batch = play_sequences(learner, sequences, source=f"all-signs[{T}]")
        return self._cover_table(learner, batch)

    def cmd_stochastic(self) -> CommandResult:
        """Monte Carlo check of the expected-loss bound."""
        s = self.settings
        learner = self.build_learner()
        if not isinstance(learner, SteinLearner):
            raise ValueError("learner: stochastic runs need the stein learner")
        result = run_stochastic(
            learner,
            s.build_adversary(),
            s.T,
            s.trials,
            s.seed,
            chunk_size=s.chunk_size,
            workers=s.workers,
        )
        row = {
            "mean_loss": result.mean_loss,
            "stderr": result.stderr,
            "bound_rhs": result.bound_rhs,
            "smoothed_final": result.smoothed_final,
            "error_sum": result.error_sum,
            "margin": result.margin,
        }
        violations = 0 if result.holds else 1
        record_violations("expectation", violations)
        summary = {"trials": float(result.n_trials), "holds": float(result.holds), **row}
        return CommandResult(
            s.command.value, pd.DataFrame([row], columns=STOCHASTIC_COLUMNS), summary, violations
        )

    def document(self, result: CommandResult) -> OutputDocument:
        rows = [
            {key: _real(value) for key, value in record.items()}
            for record in result.table.to_dict(orient="records")
        ]
        return OutputDocument(
            command=result.command,
            config=self.settings.to_flat(),
            columns=[str(c) for c in result.table.columns],
            rows=rows,
            summary={key: _real(value) for key, value in result.summary.items()},
        )

    def write(self, result: CommandResult) -> List[str]:
        """
        Emit the result in the configured format.

        :return: Paths written; empty when writing to stdout
        """
        if self.settings.format is OutputFormat.JSON:
            return write_json(self.document(result), self.settings.out)
        return write_csv(result.table, self.settings.out, result.summary)


def _real(value: object) -> Union[float, None]:
    number = float(value)  # type: ignore[arg-type]
    return number if math.isfinite(number) else None
