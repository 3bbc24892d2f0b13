"""
Test the Hill estimator, tail constants, harmonicity and shape comparison.

Set CASCADE_LAB_SLOW=1 to run the population-dynamics tail checks.
"""

import os
import sys
import unittest

import numpy as np

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from cascade import ParticlePool, fixpoint_pool, moment_probe
from ensemble import BranchingLaw, mean_and_perron
from errors import (DegenerateTail, InsufficientDirections, InsufficientSamples,
                    NonConstantBranching, PoolTooSmall)
from spectral import build_grid, find_chi, solve_dual_spectral
from tail import (TailReport, compare_shapes, default_directions, default_k_grid,
                  dual_tail_function, find_plateau, harmonicity_check, hill, hill_curve,
                  rank_table, tail_constant, tail_scan)
from tests.fixtures import SLOW, fixture, oracle


def pareto(alpha, n, seed):
    """Samples with P[X > t] = t^-alpha for t >= 1."""
    return np.random.default_rng(seed).pareto(alpha, n) + 1.0


def pareto_pool(alpha, n, seed):
    samples = np.zeros((n, 2))
    samples[:, 0] = pareto(alpha, n, seed)
    samples[:, 1] = 1.0
    return ParticlePool(samples, 1, seed, 'synthetic')


class TestHill(unittest.TestCase):
    """Test the Hill estimator."""

    def test_pareto_index(self):
        x = pareto(2.0, 100_000, 0)
        self.assertAlmostEqual(hill(x, 3600), 2.0, delta=0.1)

    def test_small_k_rejected(self):
        with self.assertRaises(ValueError):
            hill(pareto(2.0, 1000, 1), 49)

    def test_k_at_least_n(self):
        with self.assertRaises(InsufficientSamples):
            hill(pareto(2.0, 100, 1), 100)

    def test_constant_samples(self):
        with self.assertRaises(DegenerateTail):
            hill(np.full(1000, 3.0), 100)

    def test_ties_are_broken(self):
        x = np.ceil(pareto(1.5, 50_000, 2))
        self.assertTrue(np.isfinite(hill(x, 500)))

    def test_scale_equivariant(self):
        x = pareto(1.7, 20_000, 3)
        self.assertAlmostEqual(hill(4.0 * x, 400), hill(x, 400), places=12)

    def test_curve_matches_pointwise(self):
        x = pareto(2.0, 20_000, 4)
        k_grid = [60, 200, 800]
        curve = hill_curve(x, k_grid)
        for k, value in zip(k_grid, curve):
            self.assertAlmostEqual(value, hill(x, k), places=12)


class TestPlateau(unittest.TestCase):
    """Test plateau detection on the Hill curve."""

    def test_pareto_is_heavy_tailed(self):
        x = pareto(2.0, 1_000_000, 5)
        k_grid = default_k_grid(x.size)
        plateau = find_plateau(k_grid, hill_curve(x, k_grid))
        self.assertTrue(plateau.heavy_tailed)
        self.assertAlmostEqual(plateau.chi, 2.0, delta=0.3)

    def test_exponential_has_no_plateau(self):
        x = np.random.default_rng(6).exponential(size=100_000)
        k_grid = default_k_grid(x.size)
        self.assertFalse(find_plateau(k_grid, hill_curve(x, k_grid)).heavy_tailed)

    def test_flat_pair_at_small_k_ignored(self):
        k_grid = [50, 100, 200, 400, 800, 1600, 3200, 6400, 12800]
        curve = [2.4, 2.4, 2.3, 2.0, 2.02, 1.98, 2.01, 2.2, 2.5]
        plateau = find_plateau(k_grid, curve)
        self.assertEqual(plateau.window.tolist(), [400, 800, 1600, 3200, 6400])
        self.assertEqual(plateau.k, 1600)
        self.assertAlmostEqual(plateau.chi, 2.042, places=12)

    def test_short_grid_uses_every_run(self):
        plateau = find_plateau([50, 80, 120], [1.9, 2.0, 2.1])
        self.assertEqual(plateau.window.tolist(), [50, 80, 120])
        self.assertEqual(plateau.k, 80)
        self.assertAlmostEqual(plateau.chi, 2.0, places=12)

    def test_k_grid_bounds(self):
        k_grid = default_k_grid(100_000)
        self.assertEqual(k_grid[0], 50)
        self.assertLessEqual(k_grid[-1], 5000)
        with self.assertRaises(InsufficientSamples):
            default_k_grid(900)


class TestTailConstant(unittest.TestCase):
    """Test D_hat and the rank table."""

    def test_pareto_constant(self):
        x = pareto(2.0, 1_000_000, 7)
        self.assertAlmostEqual(tail_constant(x, 2.0), 1.0, delta=0.1)

    def test_homogeneous_in_scale(self):
        x = pareto(1.5, 100_000, 8)
        self.assertAlmostEqual(tail_constant(2.0 * x, 1.5) / tail_constant(x, 1.5),
                               2.0 ** 1.5, places=8)

    def test_too_few_samples(self):
        with self.assertRaises(InsufficientSamples):
            tail_constant(pareto(2.0, 150, 9), 2.0)

    def test_rank_table(self):
        table = rank_table([3.0, 1.0, 2.0, 5.0])
        self.assertEqual(list(table.columns), ['rank', 'value', 'tail_probability'])
        self.assertEqual(table['value'].tolist(), [5.0, 3.0, 2.0, 1.0])
        self.assertEqual(table['tail_probability'].iloc[0], 0.25)


class TestTailScan(unittest.TestCase):
    """Test the per-direction scan."""

    def test_pool_too_small(self):
        with self.assertRaises(PoolTooSmall):
            tail_scan(pareto_pool(2.0, 50_000, 0), [1.0, 0.0])

    def test_random_children_refused(self):
        with self.assertRaises(NonConstantBranching):
            tail_scan(pareto_pool(2.0, 100_000, 0), [1.0, 0.0],
                      branching=BranchingLaw.finite({2: 0.5, 3: 0.5}))

    def test_synthetic_pool(self):
        report = tail_scan(pareto_pool(2.0, 100_000, 10), [1.0, 0.0], chi_spectral=2.0,
                           resamples=40, workers=2)
        self.assertAlmostEqual(report.chi_hat, 2.0, delta=0.3)
        self.assertAlmostEqual(report.D_hat, 1.0, delta=0.1)
        self.assertLessEqual(report.ci[0], report.ci[1])
        self.assertTrue(report.heavy_tailed)
        data = report.to_dict()
        self.assertEqual(len(data['k_scan']), len(report.k_grid))
        self.assertEqual(data['pool_size'], 100_000)

    def test_bootstrap_independent_of_workers(self):
        pool = pareto_pool(1.5, 100_000, 11)
        first = tail_scan(pool, [1.0, 0.0], resamples=20, workers=1)
        second = tail_scan(pool, [1.0, 0.0], resamples=20, workers=4)
        self.assertEqual(first.ci, second.ci)


class TestHarmonicity(unittest.TestCase):
    """Test the harmonicity identity against the dual eigenfunction."""

    @classmethod
    def setUpClass(cls):
        cls.ensemble = oracle(calibrated=True)
        cls.grid = build_grid(2, 400)
        cls.chi = find_chi(cls.ensemble, 6.0, cls.grid).chi
        cls.dual = solve_dual_spectral(cls.ensemble, cls.chi, cls.grid)
        cls.directions = default_directions(mean_and_perron(cls.ensemble))

    def test_dual_eigenfunction_is_harmonic(self):
        rows = harmonicity_check(None, self.ensemble, self.chi, self.directions,
                                 tail_function=dual_tail_function(self.dual))
        self.assertEqual(len(rows), 8)
        for row in rows:
            self.assertAlmostEqual(row.ratio, 1.0, delta=1e-3)
            self.assertTrue(row.passed)

    def test_wrong_exponent_detected(self):
        rows = harmonicity_check(None, self.ensemble, self.chi + 0.3, self.directions,
                                 tail_function=dual_tail_function(self.dual))
        self.assertGreater(max(abs(row.ratio - 1.0) for row in rows), 0.05)

    def test_shape_correlation_exact(self):
        reports = [TailReport(direction=u, chi_hat=self.chi, k_used=100, chi_spectral=self.chi,
                              D_hat=3.0 * dual_tail_function(self.dual)(u), ci=(0, 0), pool_size=0)
                   for u in self.directions]
        shape = compare_shapes(reports, self.dual)
        self.assertAlmostEqual(shape.correlation, 1.0, places=10)
        self.assertTrue(shape.passed)

    def test_shape_correlation_with_noise(self):
        rng = np.random.default_rng(12)
        reports = [TailReport(direction=u, chi_hat=self.chi, k_used=100, chi_spectral=self.chi,
                              D_hat=dual_tail_function(self.dual)(u) * (1 + 0.01 * rng.standard_normal()),
                              ci=(0, 0), pool_size=0)
                   for u in self.directions]
        self.assertGreaterEqual(compare_shapes(reports, self.dual).correlation, 0.9)

    def test_too_few_directions(self):
        reports = [TailReport(direction=u, chi_hat=1, k_used=100, chi_spectral=1, D_hat=1.0,
                              ci=(0, 0), pool_size=0) for u in self.directions[:4]]
        with self.assertRaises(InsufficientDirections):
            compare_shapes(reports, self.dual)


@unittest.skipUnless(SLOW, "long population run")
class TestTailFixture(unittest.TestCase):
    """Cross-check the pool tail against the spectral exponent on models/tail.json."""

    @classmethod
    def setUpClass(cls):
        cls.ensemble = fixture('tail', calibrated=True)
        cls.perron = mean_and_perron(cls.ensemble)
        grid = build_grid(2, 400)
        cls.chi = find_chi(cls.ensemble, 6.0, grid).chi
        cls.dual = solve_dual_spectral(cls.ensemble, cls.chi, grid)
        cls.pool = fixpoint_pool(cls.ensemble, 1_000_000, 80, seed=1)
        cls.directions = default_directions(cls.perron)

    def scan(self, u, resamples=50):
        return tail_scan(self.pool, u, chi_spectral=self.chi, resamples=resamples)

    def test_hill_matches_spectral_chi(self):
        for u in (self.perron.v_star, [1.0, 0.0], [2 ** -0.5, 2 ** -0.5]):
            report = self.scan(u)
            self.assertLessEqual(abs(report.chi_hat - self.chi), 0.15,
                                 f"u = {u}: chi_hat {report.chi_hat:.4f} (k = {report.k_used})")
            self.assertTrue(report.heavy_tailed)

    def test_directions_agree_within_intervals(self):
        first = self.scan(self.perron.v_star, resamples=100)
        second = self.scan([1.0, 0.0], resamples=100)
        half_widths = (first.ci[1] - first.ci[0]) / 2 + (second.ci[1] - second.ci[0]) / 2
        self.assertLessEqual(abs(first.chi_hat - second.chi_hat), half_widths)

    def test_pool_tail_constant_is_harmonic(self):
        rows = harmonicity_check(self.pool, self.ensemble, self.chi, self.directions)
        self.assertEqual(len(rows), 8)
        for row in rows:
            self.assertTrue(row.passed, f"ratio {row.ratio:.4f} along {row.direction}")

    def test_shape_follows_dual_eigenfunction(self):
        reports = [self.scan(u, resamples=10) for u in self.directions]
        self.assertGreaterEqual(compare_shapes(reports, self.dual).correlation, 0.9)

    def test_moment_dichotomy(self):
        # soft: the prefix estimates below chi settle, above chi they keep moving
        below, above = moment_probe(self.pool, [(1 + self.chi) / 2, self.chi + 0.5])
        self.assertEqual(below.verdict, 'stable')
        self.assertNotEqual(above.verdict, 'stable')
        self.assertGreater(above.change, below.change)


class TestDefaultDirections(unittest.TestCase):
    """Test the default direction set."""

    def test_plane(self):
        perron = mean_and_perron(oracle())
        directions = default_directions(perron)
        self.assertEqual(len(directions), 8)
        np.testing.assert_array_equal(directions[0], perron.v_star)
        for u in directions:
            self.assertAlmostEqual(float(np.linalg.norm(u)), 1.0, places=12)
            self.assertTrue(np.all(u >= 0))

    def test_three_dimensions(self):
        directions = default_directions(mean_and_perron(fixture('random_children')), count=6)
        self.assertEqual(len(directions), 6)
        self.assertTrue(all(u.shape == (3,) for u in directions))


if __name__ == '__main__':
    unittest.main()
