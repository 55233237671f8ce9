import numpy as np
import pytest

from core.baselines import CoverLearner, CoverSpec, OGDLearner
from core.exceptions import BooleanProtocolError, GameFault
from core.olo import SteinLearner, rho_sqrt_horizon
from core.targets import huber_target
from services.adversary_service import Adversary, AdversaryKind, scripted
from services.game_service import (
    GameTranscript,
    TranscriptBatch,
    play,
    play_batch,
    play_sequences,
    two_point_check,
    two_point_conditions,
)
from utils.metrics import registry


class TestPlay:
    """
    Test suite for the game loop.
    """

    def test_alternating_script(self):
        T = 10
        transcript = play(OGDLearner(1.0, T), scripted([1.0, -1.0] * 5), T)
        assert transcript.s_final == 0.0
        assert transcript.loss_total == pytest.approx(float(np.sum(transcript.x * transcript.g)))
        np.testing.assert_array_equal(transcript.s_path, np.cumsum(transcript.g))

    def test_regret_identities(self):
        T = 50
        transcript = play(
            SteinLearner(huber_target(0.2), rho_sqrt_horizon(T)),
            Adversary(AdversaryKind.UNIFORM_BOX, rng_seed=4),
            T,
        )
        loss, s = transcript.loss_total, transcript.s_final
        for u in (-1.0, -0.3, 0.0, 0.8, 1.0):
            assert transcript.regret_at(u) == pytest.approx(loss - u * s, abs=1e-12)
        assert transcript.uniform_regret == pytest.approx(
            max(transcript.regret_at(-1.0), transcript.regret_at(1.0)), abs=1e-12
        )
        summary = transcript.summary()
        assert set(summary) == {
            "T",
            "loss_total",
            "s_final",
            "regret_minus_one",
            "regret_zero",
            "regret_one",
            "uniform_regret",
        }
        assert summary["T"] == 50.0

    def test_batch_matches_single_games(self):
        T = 30
        adversary = Adversary(AdversaryKind.RADEMACHER_IID, rng_seed=11)
        batch = play_batch(OGDLearner(1.0, T), adversary, T, n_games=4, first_game=2)
        assert len(batch) == 4
        for i in range(4):
            single = play(OGDLearner(1.0, T), adversary, T, game=2 + i)
            np.testing.assert_array_equal(batch.x[i], single.x)
            np.testing.assert_array_equal(batch.g[i], single.g)

    def test_stein_batch_matches_single_games(self):
        T = 25
        learner = SteinLearner(huber_target(0.3), rho_sqrt_horizon(T))
        adversary = Adversary(AdversaryKind.UNIFORM_BOX, rng_seed=5)
        batch = play_batch(learner, adversary, T, n_games=3)
        for i in range(3):
            single = play(learner.clone(), adversary, T, game=i)
            np.testing.assert_allclose(batch.x[i], single.x, rtol=0.0, atol=1e-12)

    def test_sequences(self):
        result = play_sequences(OGDLearner(1.0, 3), np.array([1.0, 1.0, -1.0]))
        assert result.x.shape == (1, 3)
        assert result.transcript(0).T == 3

    def test_horizon_mismatch(self):
        with pytest.raises(ValueError):
            play(OGDLearner(1.0, 5), scripted([1.0] * 6), 6)

    def test_learner_failure_carries_round(self):
        learner = CoverLearner(CoverSpec.build(5, np.abs))
        with pytest.raises(GameFault) as info:
            play(learner, Adversary(AdversaryKind.UNIFORM_BOX), 5)
        assert info.value.round_index == 1
        assert isinstance(info.value.cause, BooleanProtocolError)
        assert str(info.value).startswith("round 1:")

    def test_short_script_fails_in_round(self):
        with pytest.raises(GameFault) as info:
            play(OGDLearner(1.0, 5), scripted([1.0, 1.0]), 5)
        assert info.value.round_index == 3

    def test_metrics_recorded(self):
        before = registry.get_sample_value("stein_olo_games_total", {"learner": "ogd(2)"}) or 0.0
        play_batch(OGDLearner(2.0, 4), Adversary(AdversaryKind.SIGN_WORST), 4, n_games=3)
        after = registry.get_sample_value("stein_olo_games_total", {"learner": "ogd(2)"})
        assert after - before == 3.0
        play(OGDLearner(2.0, 4), Adversary(AdversaryKind.SIGN_WORST), 4)
        gauge = registry.get_sample_value("stein_olo_last_uniform_regret")
        assert gauge is not None


class TestTranscripts:
    """
    Test suite for transcript containers.
    """

    def test_shapes_must_match(self):
        with pytest.raises(ValueError):
            TranscriptBatch(np.zeros((2, 3)), np.zeros((2, 4)))

    def test_single_game_container(self):
        with pytest.raises(ValueError):
            GameTranscript(np.zeros((2, 3)), np.zeros((2, 3)))

    def test_arrays_are_read_only(self):
        batch = TranscriptBatch(np.zeros((2, 3)), np.ones((2, 3)))
        with pytest.raises(ValueError):
            batch.x[0, 0] = 1.0


class TestTwoPoint:
    """
    Test suite for the equivalence between two-point budgets and
    comparator-wise regret bounds.
    """

    def test_zero_loss_transcript(self):
        transcript = GameTranscript(np.zeros(2), np.ones(2))
        assert two_point_conditions(transcript, 0.0, 2.0) == (True, True)
        assert two_point_conditions(transcript, 0.0, 1.9) == (False, False)

    def test_random_transcripts_agree(self, rng):
        x = rng.uniform(-1.0, 1.0, size=(1000, 20))
        g = rng.uniform(-1.0, 1.0, size=(1000, 20))
        batch = TranscriptBatch(x, g)
        budgets = zip(rng.uniform(-2.0, 2.0, 1000), rng.uniform(0.0, 6.0, 1000))
        for game, (a, b) in enumerate(budgets):
            assert two_point_check(batch.transcript(game), float(a), float(b))

    def test_batch_form(self, rng):
        batch = TranscriptBatch(
            rng.uniform(-1.0, 1.0, size=(50, 10)), rng.uniform(-1.0, 1.0, size=(50, 10))
        )
        agree = two_point_check(batch, 0.5, 3.0)
        assert agree.shape == (50,)
        assert np.all(agree)

    def test_comparator_zero_is_total_loss(self, rng):
        x = rng.uniform(-1.0, 1.0, size=(200, 15))
        g = rng.uniform(-1.0, 1.0, size=(200, 15))
        batch = TranscriptBatch(x, g)
        _, regret_side = two_point_conditions(batch, 0.3, 1e9)
        np.testing.assert_array_equal(regret_side, np.asarray(batch.loss_total) <= 0.3)


if __name__ == '__main__':
    pytest.main([__file__])
