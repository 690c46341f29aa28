import numpy as np
import pytest

from gancs.theory import (
    TabularDistribution,
    grid_optimal_discriminator,
    lsgan_d_objective,
    lsgan_g_objective,
    optimal_discriminator,
    pearson_chi2,
    simplex_grid,
)


class TestDistribution:
    def test_random_is_valid(self, rng):
        for _ in range(100):
            p = TabularDistribution.random(8, rng)
            assert p.support_size == 8 and abs(p.probs.sum() - 1) <= 1e-12

    @pytest.mark.parametrize("probs", [[], [0.5, 0.6], [-0.1, 1.1], [np.nan, 1.0], [[0.5, 0.5]]])
    def test_invalid(self, probs):
        with pytest.raises(ValueError):
            TabularDistribution(np.array(probs, dtype=float))


class TestOptimalDiscriminator:
    def test_equal_distributions(self, rng):
        p = TabularDistribution.random(8, rng)
        np.testing.assert_array_equal(optimal_discriminator(p, p), 0.5)

    def test_disjoint(self):
        np.testing.assert_array_equal(optimal_discriminator([1.0, 0.0], [0.0, 1.0]), [1.0, 0.0])

    def test_both_zero_convention(self):
        np.testing.assert_array_equal(optimal_discriminator([1.0, 0.0], [1.0, 0.0]), [0.5, 0.5])

    def test_matches_grid_search(self, rng):
        for _ in range(50):
            px, pg = TabularDistribution.random(8, rng), TabularDistribution.random(8, rng)
            assert np.max(np.abs(optimal_discriminator(px, pg) - grid_optimal_discriminator(px, pg, 1e-3))) <= 1e-3

    def test_beats_random_discriminators(self, rng):
        px, pg = TabularDistribution.random(8, rng), TabularDistribution.random(8, rng)
        best = lsgan_d_objective(px, pg, optimal_discriminator(px, pg))
        for d in rng.random((1000, 8)):
            assert best <= lsgan_d_objective(px, pg, d)

    def test_support_mismatch(self):
        with pytest.raises(ValueError):
            optimal_discriminator([1.0], [0.5, 0.5])


class TestObjectives:
    def test_d_objective_examples(self, rng):
        p = TabularDistribution.random(6, rng)
        q = TabularDistribution.random(6, rng)
        assert lsgan_d_objective(p, p, optimal_discriminator(p, p)) == pytest.approx(0.5, abs=1e-15)
        assert lsgan_d_objective(p, q, np.ones(6)) == pytest.approx(1.0, abs=1e-12)
        assert lsgan_d_objective(p, q, np.zeros(6)) == pytest.approx(1.0, abs=1e-12)

    def test_g_objective_unique_minimum(self):
        px = np.array([0.2, 0.3, 0.5])
        grid = simplex_grid(3, 20)
        values = np.array([lsgan_g_objective(px, pg, lam=2.0) for pg in grid])
        best = grid[np.argmin(values)]
        np.testing.assert_allclose(best, px, atol=1e-12)
        assert np.sum(values <= values.min() + 1e-12) == 1

    def test_simplex_grid(self):
        g = simplex_grid(3, 4)
        assert len(g) == 15
        np.testing.assert_allclose(g.sum(axis=1), 1.0)


class TestChi2:
    def test_equal_is_zero(self, rng):
        p = TabularDistribution.random(8, rng)
        assert abs(pearson_chi2(p, p)) <= 1e-12

    def test_disjoint_is_two(self):
        assert pearson_chi2([0.5, 0.5, 0.0, 0.0], [0.0, 0.0, 0.3, 0.7]) == pytest.approx(2.0)

    def test_monotone_along_interpolation(self, rng):
        px, q = TabularDistribution.random(8, rng).probs, TabularDistribution.random(8, rng).probs
        vals = [pearson_chi2(px, (1 - t) * px + t * q) for t in np.linspace(0, 1, 21)]
        assert all(b > a for a, b in zip(vals, vals[1:]))
