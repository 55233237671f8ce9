import math

import numpy as np
import pytest

from core.olo import SteinLearner, rho_sqrt_horizon
from core.specfn import SQRT_2_OVER_PI
from core.targets import (
    abs_target,
    custom_target,
    gaussian_expectation_adaptive,
    huber_target,
    logcosh_target,
    soft_threshold_target,
)
from services.adversary_service import Adversary, AdversaryKind
from services.bound_service import (
    BoundLedger,
    lower_bound_value,
    pathwise_violations,
    rademacher_lower_bound_value,
    regret_duality_check,
    pathwise_bound,
)
from services.game_service import GameTranscript, TranscriptBatch, play, play_batch
from utils.metrics import registry

T = 100
SCALE = 1.0 / math.sqrt(T)
TARGETS = [
    abs_target(),
    huber_target(SCALE),
    logcosh_target(SCALE),
    soft_threshold_target(SCALE),
]
ADVERSARIES = [
    Adversary(AdversaryKind.SIGN_WORST),
    Adversary(AdversaryKind.RADEMACHER_IID, rng_seed=1),
    Adversary(AdversaryKind.UNIFORM_BOX, rng_seed=2),
    Adversary(AdversaryKind.GAUSSIAN_NOISY, param=0.5, rng_seed=3),
]
# Drift exercises the unbalanced direction at scale
SCALE_ADVERSARIES = ADVERSARIES + [Adversary(AdversaryKind.DRIFT, param=0.3)]
SCALE_KINDS = ["abs", "huber", "logcosh", "softthr"]


def _scaled_target(kind, horizon):
    scale = 1.0 / math.sqrt(horizon)
    return {
        "abs": abs_target(),
        "huber": huber_target(scale),
        "logcosh": logcosh_target(scale),
        "softthr": soft_threshold_target(scale),
    }[kind]


class TestPathwiseBound:
    """
    Test suite for the pathwise loss bound of the Stein learner.
    """

    @pytest.mark.parametrize("adversary", ADVERSARIES, ids=[a.name for a in ADVERSARIES])
    @pytest.mark.parametrize("h", TARGETS, ids=[h.name for h in TARGETS])
    def test_no_violations(self, h, adversary):
        schedule = rho_sqrt_horizon(T)
        batch = play_batch(SteinLearner(h, schedule), adversary, T, n_games=20)
        ledger = pathwise_bound(batch, schedule, h)
        assert pathwise_violations(batch, ledger).size == 0

    @pytest.mark.slow
    @pytest.mark.parametrize(
        "adversary", SCALE_ADVERSARIES, ids=[a.name for a in SCALE_ADVERSARIES]
    )
    @pytest.mark.parametrize("kind", SCALE_KINDS)
    def test_no_violations_at_scale(self, kind, adversary):
        horizon = 1000
        h = _scaled_target(kind, horizon)
        schedule = rho_sqrt_horizon(horizon)
        batch = play_batch(SteinLearner(h, schedule), adversary, horizon, n_games=1000)
        assert pathwise_violations(batch, pathwise_bound(batch, schedule, h)).size == 0

    @pytest.mark.slow
    @pytest.mark.parametrize("kind", SCALE_KINDS)
    def test_heavy_gaussian_gradients_at_scale(self, kind):
        horizon = 1000
        h = _scaled_target(kind, horizon)
        schedule = rho_sqrt_horizon(horizon)
        adversary = Adversary(AdversaryKind.GAUSSIAN_NOISY, param=1.5, drift=0.2, rng_seed=11)
        batch = play_batch(SteinLearner(h, schedule), adversary, horizon, n_games=100)
        ledger = pathwise_bound(batch, schedule, h)
        assert np.all(np.isfinite(np.asarray(ledger.total)))
        assert pathwise_violations(batch, ledger).size == 0

    def test_balanced_sum_on_absolute_value(self):
        transcript = GameTranscript(np.zeros(10), np.array([1.0, -1.0] * 5))
        ledger = pathwise_bound(transcript, rho_sqrt_horizon(10), abs_target())
        assert abs(ledger.psi_bar_term - math.sqrt(20.0 / math.pi)) <= 1e-9

    @pytest.mark.parametrize("horizon", [25, 100, 400, 1600, 6400])
    def test_error_sum_is_logarithmic(self, horizon, rng):
        g = rng.uniform(-1.0, 1.0, size=(25, horizon))
        ledger = pathwise_bound(
            TranscriptBatch(np.zeros_like(g), g), rho_sqrt_horizon(horizon), abs_target()
        )
        assert np.all(np.asarray(ledger.err_total) <= 3.0 * (1.0 + math.log(horizon)))

    def test_boolean_gradients_clear_first_component(self):
        transcript = play(
            SteinLearner(abs_target(), rho_sqrt_horizon(T)),
            Adversary(AdversaryKind.SIGN_WORST),
            T,
        )
        ledger = pathwise_bound(transcript, rho_sqrt_horizon(T), abs_target())
        assert ledger.first_component_total == 0.0

    def test_sign_worst_uniform_regret(self):
        horizon = 1000
        transcript = play(
            SteinLearner(abs_target(), rho_sqrt_horizon(horizon)),
            Adversary(AdversaryKind.SIGN_WORST),
            horizon,
        )
        assert transcript.uniform_regret <= math.sqrt(2.0 * horizon / math.pi) + 25.0

    @pytest.mark.slow
    @pytest.mark.parametrize("horizon", [1_000, 10_000, 100_000])
    def test_sign_worst_regret_tracks_square_root(self, horizon):
        transcript = play(
            SteinLearner(abs_target(), rho_sqrt_horizon(horizon)),
            Adversary(AdversaryKind.SIGN_WORST),
            horizon,
        )
        regret = float(transcript.uniform_regret)
        assert 0.5 <= regret / math.sqrt(horizon) <= 0.81
        assert regret <= math.sqrt(2.0 * horizon / math.pi) + 10.0 * math.log(horizon)

    def test_large_gradient_inflates_error(self):
        g = np.full(10, 0.5)
        calm = pathwise_bound(GameTranscript(np.zeros(10), g), rho_sqrt_horizon(10), abs_target())
        g[4] = 10.0
        wild = pathwise_bound(GameTranscript(np.zeros(10), g), rho_sqrt_horizon(10), abs_target())
        assert wild.err_total > calm.err_total + 100.0

    def test_nonconvex_error_form(self):
        sine = custom_target(np.sin, np.cos, convex=False)
        horizon = 8
        g = np.full(horizon, 0.5)
        schedule = rho_sqrt_horizon(horizon)
        ledger = pathwise_bound(GameTranscript(np.zeros(horizon), g), schedule, sine)
        assert not ledger.convex_mode
        expected = SQRT_2_OVER_PI * 0.75 / np.sqrt(schedule.variances[:-1])
        np.testing.assert_allclose(ledger.err_terms[:, 0], expected, rtol=1e-14)
        convex = pathwise_bound(GameTranscript(np.zeros(horizon), g), schedule, sine, True)
        assert convex.first_component_total == 0.0

    def test_schedule_length_mismatch(self):
        with pytest.raises(ValueError):
            pathwise_bound(
                GameTranscript(np.zeros(5), np.ones(5)), rho_sqrt_horizon(6), abs_target()
            )

    def test_violation_is_reported(self):
        batch = TranscriptBatch(np.ones((2, 3)), np.array([[1.0, 1.0, 1.0], [-1.0, -1.0, -1.0]]))
        ledger = BoundLedger(np.zeros(2), np.zeros((2, 3, 2)), True)
        before = registry.get_sample_value(
            "stein_olo_bound_violations_total", {"check": "pathwise"}
        ) or 0.0
        bad = pathwise_violations(batch, ledger)
        np.testing.assert_array_equal(bad, [0])
        after = registry.get_sample_value(
            "stein_olo_bound_violations_total", {"check": "pathwise"}
        )
        assert after - before == 1.0


class TestDualityAndLowerBounds:
    """
    Test suite for the comparator-wise form and the lower-bound values.
    """

    @pytest.mark.parametrize("h", TARGETS, ids=[h.name for h in TARGETS])
    def test_duality_holds(self, h):
        schedule = rho_sqrt_horizon(T)
        batch = play_batch(
            SteinLearner(h, schedule), Adversary(AdversaryKind.UNIFORM_BOX, rng_seed=9), T, 10
        )
        ledger = pathwise_bound(batch, schedule, h)
        report = regret_duality_check(batch, ledger, h, schedule)
        assert report.ok, f"excess {report.max_excess} at u={report.worst_u}"

    def test_lower_bound_values(self):
        horizon = 64
        balanced = lower_bound_value(abs_target(), horizon, 0.0)
        assert abs(balanced - math.sqrt(128.0 / math.pi)) <= 1e-12
        assert lower_bound_value(abs_target(), horizon, 64.0) == pytest.approx(
            -64.0 + math.sqrt(128.0 / math.pi), abs=1e-12
        )
        assert rademacher_lower_bound_value(abs_target(), 4, 0.0) == pytest.approx(1.5, abs=1e-12)

    def test_lower_bound_matches_smoothing_term(self, rng):
        """With ρ_T = 0 and ρ_0 = √T the ledger's first term is the lower-bound value."""
        horizon = 30
        g = rng.uniform(-1.0, 1.0, size=horizon)
        h = huber_target(0.4)
        ledger = pathwise_bound(GameTranscript(np.zeros(horizon), g), rho_sqrt_horizon(horizon), h)
        assert ledger.psi_bar_term == pytest.approx(
            lower_bound_value(h, horizon, float(np.sum(g))), abs=1e-12
        )

    @pytest.mark.parametrize("horizon", [100, 400])
    def test_wide_logcosh_smoothing_term(self, horizon, rng):
        """E[h(ρ_0 Z)] in the ledger stays accurate when ρ_0 is many 1/η wide."""
        h = logcosh_target(1.0)
        g = rng.uniform(-1.0, 1.0, size=horizon)
        ledger = pathwise_bound(GameTranscript(np.zeros(horizon), g), rho_sqrt_horizon(horizon), h)
        smoothing = ledger.psi_bar_term + h.evaluate(float(np.sum(g)))
        oracle = gaussian_expectation_adaptive(h, 0.0, math.sqrt(horizon))
        assert abs(smoothing - oracle) <= 1e-9 * math.sqrt(horizon)


if __name__ == '__main__':
    pytest.main([__file__])
