"""Counter-based RNG: determinism, stream independence, distribution."""

import numpy as np
from scipy import stats

from nlcunet.rng import CounterRng, mix64


class TestDeterminism:
    def test_same_seed_same_stream(self):
        a = CounterRng(7).uniform(size=100)
        b = CounterRng(7).uniform(size=100)
        assert np.array_equal(a, b)

    def test_counter_advances(self):
        rng = CounterRng(7)
        first = rng.uniform(size=10)
        second = rng.uniform(size=10)
        assert not np.array_equal(first, second)

    def test_spawn_is_independent_of_parent_consumption(self):
        parent1 = CounterRng(3)
        parent1.uniform(size=50)
        child1 = parent1.spawn("x").uniform(size=10)
        child2 = CounterRng(3).spawn("x").uniform(size=10)
        assert np.array_equal(child1, child2)

    def test_sibling_streams_differ(self):
        root = CounterRng(5)
        a = root.spawn("a").uniform(size=20)
        b = root.spawn("b").uniform(size=20)
        assert not np.array_equal(a, b)
        c = root.spawn(0).uniform(size=20)
        d = root.spawn(1).uniform(size=20)
        assert not np.array_equal(c, d)

    def test_nested_tags(self):
        a = CounterRng(1).spawn("iter", 5).spawn("crop", 2).uniform()
        b = CounterRng(1, "iter", 5, "crop", 2).uniform()
        assert a == b

    def test_mix64_vectorized_matches_scalar(self):
        xs = np.arange(10, dtype=np.uint64)
        vec = mix64(xs)
        for i, x in enumerate(xs):
            assert mix64(x) == vec[i]


class TestDistributions:
    def test_uniform_range_and_mean(self):
        u = CounterRng(11).uniform(size=200_000)
        assert u.min() >= 0.0 and u.max() < 1.0
        assert abs(u.mean() - 0.5) < 0.01
        # 16-bin chi-square
        counts, _ = np.histogram(u, bins=16, range=(0.0, 1.0))
        expected = len(u) / 16
        chi2 = ((counts - expected) ** 2 / expected).sum()
        assert stats.chi2.sf(chi2, df=15) > 0.001

    def test_uniform_low_high(self):
        u = CounterRng(13).uniform(size=1000, low=-2.0, high=3.0)
        assert u.min() >= -2.0 and u.max() < 3.0

    def test_normal_moments(self):
        z = CounterRng(17).normal(size=400_000)
        assert abs(z.mean()) < 0.01
        assert abs(z.std() - 1.0) < 0.01
        assert abs((z ** 3).mean()) < 0.05  # near-zero skew

    def test_normal_std_scaling(self):
        z = CounterRng(19).normal(size=100_000, std=0.25)
        assert abs(z.std() - 0.25) < 0.01

    def test_integers_cover_range_uniformly(self):
        draws = CounterRng(23).integers(7, size=70_000)
        assert draws.min() == 0 and draws.max() == 6
        counts = np.bincount(draws, minlength=7)
        assert counts.min() > 70_000 / 7 * 0.9

    def test_scalar_forms(self):
        rng = CounterRng(29)
        assert isinstance(rng.uniform(), float)
        assert isinstance(rng.normal(), float)
        assert isinstance(rng.integers(5), int)
