"""Sample's-perspective BN simulator against closed forms, enumeration and live BN."""

import itertools
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from nomore.noise_model import (
    AllFromClass,
    BatchComposition,
    FixedComposition,
    Free,
    MixtureSpec,
    NoiseBatch,
    closed_form_noise,
    composition_probability,
    decompose_noise,
    disjoint_differences,
    extract_intra_noise,
    free_noise_moments,
    noise_rows,
    simulate_bn_sample,
)
from nomore.normalizers import NormalizerSpec, normalize
from nomore.stats import hotelling_one_sample
from nomore.tensor import Rng, Tensor


def unit(dim=4):
    return MixtureSpec(np.zeros((1, dim)), np.ones((1, dim)), [1.0])


def two_class(dim=4, mu=1.0):
    return MixtureSpec(np.stack([-mu * np.ones(dim), mu * np.ones(dim)]), np.ones((2, dim)), [0.5, 0.5])


class TestSpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            MixtureSpec(np.zeros((2, 3)), np.ones((2, 3)), [0.5, 0.6])
        with pytest.raises(ValueError):
            MixtureSpec(np.zeros((2, 3)), np.zeros((2, 3)), [0.5, 0.5])
        with pytest.raises(ValueError):
            MixtureSpec(np.zeros((2, 3)), np.ones((1, 3)), [0.5, 0.5])

    def test_separated_pairwise_distances(self):
        s = MixtureSpec.separated(3, dim=8, separation=10.0)
        for i, j in itertools.combinations(range(3), 2):
            assert np.linalg.norm(s.means[i] - s.means[j]) == pytest.approx(10.0)

    def test_composition_validation(self):
        with pytest.raises(ValueError):
            BatchComposition((1, 2), 4)
        with pytest.raises(ValueError):
            BatchComposition((3, 0), 3).companions(1)
        assert_array_equal(BatchComposition((3, 1), 4).companions(0), [2, 1])


class TestSimulator:
    def test_single_distribution_law(self):
        b, k = 128, 10_000
        batch = simulate_bn_sample(None, unit(8), b, rng=Rng(1), reps=k)
        var = batch.delta.var(axis=0, ddof=1).mean()
        assert abs(var / ((b - 1) / b ** 2) - 1) < 0.05
        se = math.sqrt((b - 1) / b ** 2 / k)
        assert np.all(np.abs(batch.delta.mean(axis=0)) < 4 * se)

    def test_batch_of_two(self):
        batch = simulate_bn_sample(None, unit(4), 2, rng=Rng(2), reps=20_000)
        assert batch.delta.var(axis=0).mean() == pytest.approx(0.25, rel=0.03)

    def test_all_from_class_mean(self):
        spec = MixtureSpec(np.stack([np.zeros(4), 3 * np.ones(4)]), np.ones((2, 4)), [0.5, 0.5])
        k = 4000
        batch = simulate_bn_sample(None, spec, 4, AllFromClass(1), rng=Rng(3), reps=k)
        se = math.sqrt(3 / 16 / k)
        assert np.all(np.abs(batch.delta.mean(axis=0) - 2.25) < 3 * se)

    def test_centered_mode_matches_direct_recomputation(self):
        spec = two_class(3)
        x = np.array([0.3, -0.2, 1.0])
        batch = simulate_bn_sample(x, spec, 6, Free(), rng=Rng(4), reps=5)
        gen = Rng(4).child("simulate").generator
        classes = gen.choice(2, size=(5, 5), p=spec.probs)
        z = gen.standard_normal((5, 5, 3))
        comp = spec.means[classes] + z
        for r in range(5):
            full = np.vstack([x, comp[r]])
            centred = full - full.mean(axis=0)
            assert_allclose(batch.xhat[r], centred[0], atol=1e-12)

    def test_full_mode_matches_live_batchnorm(self):
        x = np.array([0.5, -1.0, 2.0])
        batch = simulate_bn_sample(x, unit(3), 8, rng=Rng(5), reps=3, mode="full", eps=1e-5)
        gen = Rng(5).child("simulate").generator
        gen.choice(1, size=(3, 7), p=[1.0])
        z = gen.standard_normal((3, 7, 3))
        for r in range(3):
            full = np.vstack([x, z[r]])
            bn = NormalizerSpec("bn", 3, eps=1e-5)
            y = normalize(Tensor(full), bn).data
            assert_allclose(batch.xhat[r], y[0], atol=1e-12)

    @pytest.mark.parametrize("constraint", [Free(), AllFromClass(1), FixedComposition((40, 24))])
    def test_law_agreement(self, constraint):
        spec = MixtureSpec(np.stack([np.full(3, -2.0), np.full(3, 1.0)]),
                           np.stack([np.full(3, 0.5), np.full(3, 2.0)]), [0.3, 0.7])
        b, k = 64, 10_000
        batch = simulate_bn_sample(None, spec, b, constraint, rng=Rng(6), reps=k)
        if isinstance(constraint, Free):
            mean, var = free_noise_moments(spec, b)
        elif isinstance(constraint, AllFromClass):
            comp = BatchComposition((1, b - 1), b)
            mean, var = closed_form_noise(spec, comp, 0)
        else:
            mean, var = closed_form_noise(spec, BatchComposition(constraint.counts, b), 0)
        se = np.sqrt(var / k)
        assert np.all(np.abs(batch.delta.mean(axis=0) - mean) < 5 * se)
        assert np.all(np.abs(batch.delta.var(axis=0, ddof=1) / var - 1) < 5 * np.sqrt(2 / k))

    def test_batch_size_monotonicity(self):
        v = [simulate_bn_sample(None, unit(4), b, rng=Rng(7), reps=4000).delta.var() for b in (2, 4, 8, 16, 32)]
        assert all(y < x for x, y in zip(v, v[1:]))

    def test_self_class_zero_mean_and_cross_class_shift(self):
        spec = MixtureSpec.separated(2, dim=4, separation=8.0)
        b, k = 16, 4000
        same = simulate_bn_sample(None, spec, b, AllFromClass(0), rng=Rng(8), reps=k, fixed_class=0)
        other = simulate_bn_sample(None, spec, b, AllFromClass(1), rng=Rng(9), reps=k, fixed_class=0)
        se = math.sqrt((b - 1) / b ** 2 / k)
        assert np.all(np.abs(same.xhat.mean(axis=0)) < 4 * se)
        shift = (b - 1) / b * (spec.means[0] - spec.means[1])
        assert_allclose(other.xhat.mean(axis=0), shift, atol=4 * se)

    def test_errors(self):
        spec = MixtureSpec(np.zeros((2, 2)), np.ones((2, 2)), [1.0, 0.0])
        with pytest.raises(ValueError):
            simulate_bn_sample(None, spec, 4, AllFromClass(1))
        with pytest.raises(ValueError):
            simulate_bn_sample(None, spec, 1)
        with pytest.raises(ValueError):
            simulate_bn_sample(None, spec, 4, FixedComposition((2, 3)))

    def test_reproducible(self):
        a = simulate_bn_sample(None, two_class(), 8, rng=Rng(10), reps=50)
        b = simulate_bn_sample(None, two_class(), 8, rng=Rng(10), reps=50)
        assert_array_equal(a.delta, b.delta)
        assert_array_equal(a.counts, b.counts)

    def test_rows(self):
        batch = simulate_bn_sample(None, two_class(2), 4, FixedComposition((2, 2)), rng=Rng(11), reps=3)
        rows = list(noise_rows(batch))
        assert len(rows) == 3 and len(rows[0]) == 5
        assert rows[0][2] == BatchComposition((2, 2), 4).digest()
        s = batch[1]
        assert_array_equal(s.xhat, batch.xhat[1])
        assert s.composition == BatchComposition((2, 2), 4)


class TestClosedForm:
    def test_single_distribution(self):
        mean, var = closed_form_noise(unit(2), BatchComposition((128,), 128), 0)
        assert_array_equal(mean, 0)
        assert_allclose(var, 127 / 16384)

    def test_signed_two_class_sum(self):
        mean, _ = closed_form_noise(two_class(2), BatchComposition((63, 65), 128), 1)
        assert_allclose(mean, 1 / 128)

    def test_single_companion(self):
        spec = MixtureSpec(np.stack([np.zeros(1), np.full(1, 5.0)]), np.stack([np.ones(1), np.full(1, 2.0)]), [0.5, 0.5])
        mean, var = closed_form_noise(spec, BatchComposition((1, 1), 2), 0)
        assert mean[0] == 2.5 and var[0] == 1.0


class TestCompositionProbability:
    def test_trivial(self):
        assert composition_probability(two_class(), BatchComposition((1, 1), 2)) == pytest.approx(0.5)
        spec = MixtureSpec(np.zeros((2, 1)), np.ones((2, 1)), [0.0, 1.0])
        assert composition_probability(spec, BatchComposition((0, 5), 5)) == 1.0

    def test_enumeration(self):
        probs = [0.2, 0.3, 0.5]
        spec = MixtureSpec(np.zeros((3, 1)), np.ones((3, 1)), probs)
        got = composition_probability(spec, BatchComposition((1, 1, 2), 4))
        brute = sum(np.prod([probs[c] for c in draw])
                    for draw in itertools.product(range(3), repeat=4)
                    if tuple(np.bincount(draw, minlength=3)) == (1, 1, 2))
        assert got == pytest.approx(0.18, abs=1e-15)
        assert got == pytest.approx(brute, abs=1e-15)

    def test_sums_to_one(self):
        spec = MixtureSpec(np.zeros((3, 1)), np.ones((3, 1)), [0.2, 0.3, 0.5])
        total = sum(composition_probability(spec, BatchComposition((a, b, 6 - a - b), 6))
                    for a in range(7) for b in range(7 - a))
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_large_batch_is_finite(self):
        spec = MixtureSpec(np.zeros((2, 1)), np.ones((2, 1)), [0.5, 0.5])
        p = composition_probability(spec, BatchComposition((64, 64), 128))
        assert 0 < p < 1


class TestIntraNoise:
    def test_pair_count(self):
        batch = simulate_bn_sample(None, unit(3), 16, FixedComposition((16,)), rng=Rng(12), reps=40)
        assert extract_intra_noise(batch).shape == (780, 3)
        assert disjoint_differences(batch).shape == (20, 3)

    def test_identical_reps(self):
        d = np.tile([0.1, 0.2], (5, 1))
        batch = NoiseBatch(0, np.zeros(2), 8, d, np.tile([8], (5, 1)))
        assert_array_equal(extract_intra_noise(batch), 0)

    def test_variance(self):
        b = 128
        batch = simulate_bn_sample(None, unit(8), b, FixedComposition((b,)), rng=Rng(13), reps=200)
        diffs = extract_intra_noise(batch)
        assert abs(diffs.var(axis=0).mean() / (254 / 16384) - 1) < 0.10

    def test_mixed_compositions_rejected(self):
        batch = simulate_bn_sample(None, two_class(), 8, Free(), rng=Rng(14), reps=30)
        with pytest.raises(ValueError):
            extract_intra_noise(batch)
        with pytest.raises(ValueError):
            extract_intra_noise([batch[0]])

    def test_inter_mean_cancels(self):
        spec = MixtureSpec.separated(2, dim=4, separation=8.0)
        passed = 0
        for seed in range(20):
            batch = simulate_bn_sample(None, spec, 32, FixedComposition((16, 16)), rng=Rng(seed, ("a1",)), reps=100)
            passed += hotelling_one_sample(disjoint_differences(batch)).p_value > 0.05
        assert passed >= 16


class TestDecomposition:
    def _batches(self, sep, seed, n=3, k=60):
        spec = MixtureSpec.separated(n, dim=8, separation=sep)
        return {y: simulate_bn_sample(None, spec, 16, AllFromClass(y), rng=Rng(seed, ("dec", y)), reps=k, fixed_class=0)
                for y in range(n)}

    def test_well_separated(self):
        rep = decompose_noise(self._batches(10.0, 0, n=2))
        assert rep.accuracy > 0.95
        assert rep.ratio > 10

    def test_shared_means_give_chance(self):
        rep = decompose_noise(self._batches(0.0, 1, n=3, k=200))
        assert rep.ratio < 0.1
        assert abs(rep.accuracy - 1 / 3) < 0.12

    def test_ratio_grows_with_spread(self):
        ratios = [decompose_noise(self._batches(s, 2)).ratio for s in (0.5, 2.0, 8.0)]
        assert ratios[0] < ratios[1] < ratios[2]

    def test_needs_two_classes_and_ten_samples(self):
        with pytest.raises(ValueError):
            decompose_noise({0: np.zeros((20, 2))})
        with pytest.raises(ValueError):
            decompose_noise({0: np.zeros((5, 2)), 1: np.ones((20, 2))})

    def test_degenerate_flagged(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((20, 1))
        b = rng.standard_normal((20, 1)) + 5
        rep = decompose_noise({0: np.hstack([a, a]), 1: np.hstack([b, b])})
        assert rep.degenerate and rep.accuracy == 1.0
