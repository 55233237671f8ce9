import math

import numpy as np
import pytest

from core.specfn import SQRT_2_OVER_PI
from services.adversary_service import (
    Adversary,
    AdversaryKind,
    adversary_from_name,
    scripted,
)


class TestAdversaryStreams:
    """
    Test suite for seeded gradient streams.
    """

    @pytest.fixture
    def box(self):
        return Adversary(AdversaryKind.UNIFORM_BOX, param=1.0, rng_seed=7)

    def test_same_seed_same_stream(self, box):
        np.testing.assert_array_equal(box.draw_noise(50, 3), box.draw_noise(50, 3))

    def test_games_and_seeds_differ(self, box):
        assert not np.array_equal(box.draw_noise(50, 0), box.draw_noise(50, 1))
        other = Adversary(AdversaryKind.UNIFORM_BOX, param=1.0, rng_seed=8)
        assert not np.array_equal(box.draw_noise(50, 0), other.draw_noise(50, 0))

    def test_batch_matches_single_games(self, box):
        batch = box.draw_noise_batch(20, 4, first_game=10)
        for i in range(4):
            np.testing.assert_array_equal(batch[i], box.draw_noise(20, 10 + i))

    def test_bounded_kinds(self):
        for kind in (AdversaryKind.RADEMACHER_IID, AdversaryKind.BERNOULLI_BIASED):
            noise = Adversary(kind, param=0.3, rng_seed=1).draw_noise(500, 0)
            assert set(np.unique(noise)) <= {-1.0, 1.0}
        box = Adversary(AdversaryKind.UNIFORM_BOX, param=0.5).draw_noise(500, 0)
        assert np.all(np.abs(box) <= 0.5)

    def test_bernoulli_bias(self):
        noise = Adversary(AdversaryKind.BERNOULLI_BIASED, param=0.8).draw_noise(20_000, 0)
        assert abs(np.mean(noise == 1.0) - 0.8) < 0.02


class TestAdversaryResponses:
    """
    Test suite for respond() and the kind flags.
    """

    def test_sign_worst_tie_goes_positive(self):
        adversary = Adversary(AdversaryKind.SIGN_WORST)
        g = adversary.respond(1, np.array([0.0, 0.4, -0.2]), np.zeros(3))
        np.testing.assert_array_equal(g, [1.0, 1.0, -1.0])
        assert adversary.is_adaptive
        assert adversary.is_boolean

    def test_drift(self):
        adversary = Adversary(AdversaryKind.DRIFT, param=-0.3)
        np.testing.assert_array_equal(adversary.respond(4, np.zeros(2), np.zeros(2)), [-0.3, -0.3])
        assert not adversary.is_boolean
        assert Adversary(AdversaryKind.DRIFT, param=1.0).is_boolean
        assert not Adversary(AdversaryKind.DRIFT, param=20.0).is_bounded

    def test_scripted(self):
        adversary = scripted([1.0, -1.0, 0.5])
        assert adversary.name == "scripted[3]"
        assert adversary.respond(3, np.zeros(1), np.zeros(1))[0] == 0.5
        assert not adversary.is_boolean
        assert scripted([1.0, -1.0]).is_boolean
        with pytest.raises(ValueError):
            adversary.respond(4, np.zeros(1), np.zeros(1))

    def test_gaussian_is_unbounded(self):
        noisy = Adversary(AdversaryKind.GAUSSIAN_NOISY, param=1.0, drift=0.2)
        assert not noisy.is_bounded
        assert not noisy.is_adaptive
        assert noisy.name == "gaussian_noisy(drift=0.2,scale=1)"

    def test_names(self):
        assert Adversary(AdversaryKind.UNIFORM_BOX, param=1.0).name == "uniform_box(1)"
        assert Adversary(AdversaryKind.SIGN_WORST).name == "sign_worst"


class TestAdversaryMoments:
    """
    Test suite for the per-round gradient moments.
    """

    def test_uniform_box(self):
        moments = Adversary(AdversaryKind.UNIFORM_BOX, param=1.0).moments()
        assert moments.second == pytest.approx(1.0 / 3.0)
        assert moments.abs_first == pytest.approx(0.5)
        assert moments.abs_third == pytest.approx(0.25)

    def test_standard_gaussian(self):
        moments = Adversary(AdversaryKind.GAUSSIAN_NOISY, param=1.0).moments()
        assert abs(moments.second - 1.0) <= 1e-12
        assert abs(moments.abs_first - SQRT_2_OVER_PI) <= 1e-12
        assert abs(moments.abs_third - 2.0 * SQRT_2_OVER_PI) <= 1e-8

    def test_shifted_gaussian_against_sampling(self):
        adversary = Adversary(AdversaryKind.GAUSSIAN_NOISY, param=0.7, drift=0.4, rng_seed=3)
        sample = adversary.draw_noise(200_000, 0)
        moments = adversary.moments()
        assert abs(np.mean(np.abs(sample)) - moments.abs_first) < 0.01
        assert abs(np.mean(np.abs(sample) ** 3) - moments.abs_third) < 0.02

    def test_no_moments_for_adaptive_or_scripted(self):
        assert Adversary(AdversaryKind.SIGN_WORST).moments() is None
        assert scripted([0.1]).moments() is None


class TestAdversaryValidation:
    """
    Test suite for constructor and name validation.
    """

    @pytest.mark.parametrize(
        "kind, param",
        [
            (AdversaryKind.BERNOULLI_BIASED, 1.5),
            (AdversaryKind.UNIFORM_BOX, 0.0),
            (AdversaryKind.GAUSSIAN_NOISY, -1.0),
        ],
    )
    def test_bad_parameters(self, kind, param):
        with pytest.raises(ValueError):
            Adversary(kind, param=param)

    def test_scripted_needs_finite_script(self):
        with pytest.raises(ValueError):
            Adversary(AdversaryKind.SCRIPTED)
        with pytest.raises(ValueError):
            scripted([1.0, math.inf])

    def test_from_name(self):
        adversary = adversary_from_name("bernoulli_biased", 0.25, seed=9)
        assert adversary.kind is AdversaryKind.BERNOULLI_BIASED
        assert adversary.rng_seed == 9
        with pytest.raises(ValueError):
            adversary_from_name("oracle")


if __name__ == '__main__':
    pytest.main([__file__])
