"""
Test cascade simulation, the martingale check and population dynamics.

Set CASCADE_LAB_SLOW=1 to run the long simulations as well.
"""

import os
import sys
import unittest

import numpy as np

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from cascade import (CascadeConfig, ParticlePool, fixpoint_pool, martingale_step_check,
                     moment_probe, nondegeneracy_report, simulate_replicas, simulate_Yn)
from config import Config
from ensemble import mean_and_perron
from errors import NotCalibrated, PoolTooSmall, WorkCapExceeded
from spectral import DerivativeReport, build_grid, solve_spectral
from tests.fixtures import SLOW, fixture, identity_collapse, oracle


def derivative(slope):
    return DerivativeReport(kappa_one=0.5, alpha_form=slope, stationary_form=slope,
                            fd_form=slope, step=1e-3)


class TestCascadeConfig(unittest.TestCase):
    """Test the guards on cascade runs."""

    def test_depth_seventeen_exceeds_cap(self):
        with self.assertRaises(WorkCapExceeded):
            CascadeConfig(fixture('pass'), depth=17)

    def test_depth_sixteen_allowed(self):
        CascadeConfig(fixture('pass'), depth=16)

    def test_cap_follows_largest_family(self):
        ensemble = fixture('random_children', calibrated=True)
        CascadeConfig(ensemble, depth=10)
        with self.assertRaises(WorkCapExceeded):
            CascadeConfig(ensemble, depth=11)

    def test_uncalibrated_rejected(self):
        with self.assertRaises(NotCalibrated):
            CascadeConfig(oracle(), depth=3)

    def test_negative_depth(self):
        with self.assertRaises(ValueError):
            CascadeConfig(fixture('pass'), depth=-1)


class TestSimulation(unittest.TestCase):
    """Test Y_n realizations."""

    def test_depth_zero_is_v(self):
        config = CascadeConfig(oracle(calibrated=True), depth=0)
        np.testing.assert_array_equal(simulate_Yn(config).coords, config.v)

    def test_identity_collapse_is_v(self):
        config = CascadeConfig(identity_collapse(), depth=6, replicas=50)
        replicas = simulate_replicas(config, workers=2)
        np.testing.assert_array_equal(replicas, np.tile(config.v, (50, 1)))

    def test_independent_of_workers(self):
        config = CascadeConfig(fixture('pass'), depth=4, replicas=2500, seed=7)
        np.testing.assert_array_equal(simulate_replicas(config, workers=1),
                                      simulate_replicas(config, workers=4))

    def test_seed_changes_draws(self):
        first = simulate_replicas(CascadeConfig(fixture('pass'), depth=3, replicas=10, seed=1), workers=1)
        second = simulate_replicas(CascadeConfig(fixture('pass'), depth=3, replicas=10, seed=2), workers=1)
        self.assertFalse(np.array_equal(first, second))

    def test_mean_is_v(self):
        config = CascadeConfig(fixture('pass'), depth=5, replicas=2000)
        replicas = simulate_replicas(config)
        se = replicas.std(axis=0, ddof=1) / np.sqrt(len(replicas))
        self.assertTrue(np.all(np.abs(replicas.mean(axis=0) - config.v) <= 4 * se))

    def test_replicas_in_cone(self):
        config = CascadeConfig(fixture('random_children', calibrated=True), depth=4, replicas=300)
        replicas = simulate_replicas(config)
        self.assertEqual(replicas.shape, (300, 3))
        self.assertTrue(np.all(replicas > 0))

    @unittest.skipUnless(SLOW, "long cascade run")
    def test_mean_is_v_at_depth_ten(self):
        config = CascadeConfig(fixture('pass'), depth=10, replicas=10_000)
        replicas = simulate_replicas(config)
        se = replicas.std(axis=0, ddof=1) / np.sqrt(len(replicas))
        self.assertTrue(np.all(np.abs(replicas.mean(axis=0) - config.v) <= 4 * se))


class TestMartingaleCheck(unittest.TestCase):
    """Test E[Y_{n+1} | F_n] = Y_n."""

    def test_identity_collapse_exact(self):
        report = martingale_step_check(CascadeConfig(identity_collapse(), depth=3), R=20, M=64)
        np.testing.assert_array_equal(report.z_scores, [0.0, 0.0])
        self.assertAlmostEqual(report.mean_ratio, 1.0, places=12)
        self.assertTrue(report.passed)

    def test_calibrated_oracle_passes(self):
        report = martingale_step_check(CascadeConfig(oracle(calibrated=True), depth=4), R=100)
        self.assertTrue(report.passed)
        self.assertLessEqual(report.max_z, Config.MARTINGALE_Z_MAX)

    def test_miscalibrated_drifts(self):
        ensemble = oracle(calibrated=True).scaled(1.1)
        report = martingale_step_check(CascadeConfig(ensemble, depth=4, strict=False), R=100)
        self.assertAlmostEqual(report.mean_ratio, 1.1, delta=0.02)
        self.assertFalse(report.passed)

    def test_too_few_extensions(self):
        with self.assertRaises(ValueError):
            martingale_step_check(CascadeConfig(identity_collapse(), depth=2), R=5, M=10)

    def test_report_dict(self):
        report = martingale_step_check(CascadeConfig(fixture('pass'), depth=2), R=10, M=64)
        data = report.to_dict()
        self.assertEqual(data['extensions'], 64)
        self.assertEqual(len(data['z_scores']), 2)


class TestFixpointPool(unittest.TestCase):
    """Test population dynamics."""

    def test_identity_collapse_is_v(self):
        ensemble = identity_collapse()
        v = mean_and_perron(ensemble).v
        pool = fixpoint_pool(ensemble, 1000, 5, seed=3, workers=1)
        np.testing.assert_array_equal(pool.samples, np.tile(v, (1000, 1)))

    def test_independent_of_workers(self):
        ensemble = fixture('pass')
        first = fixpoint_pool(ensemble, 20_000, 3, seed=11, workers=1)
        second = fixpoint_pool(ensemble, 20_000, 3, seed=11, workers=3)
        np.testing.assert_array_equal(first.samples, second.samples)

    def test_history(self):
        pool = fixpoint_pool(fixture('pass'), 2000, 4, seed=5, workers=2)
        self.assertEqual(len(pool.history), 5)
        self.assertIsNone(pool.history[0].proxy_distance)
        self.assertTrue(all(h.proxy_distance >= 0 for h in pool.history[1:]))
        self.assertEqual(pool.history[2].to_row()['generation'], 2)

    def test_particles_positive(self):
        pool = fixpoint_pool(fixture('pass'), 5000, 10, seed=1)
        self.assertTrue(np.all(pool.samples > 0))
        self.assertEqual(pool.generation, 10)
        self.assertEqual(pool.ensemble_hash, fixture('pass').fingerprint())

    def test_mean_near_v(self):
        ensemble = fixture('pass')
        v = mean_and_perron(ensemble).v
        pool = fixpoint_pool(ensemble, 50_000, 30, seed=2)
        np.testing.assert_allclose(pool.mean(), v, rtol=0.05)

    def test_degenerate_collapses(self):
        ensemble = fixture('degenerate', calibrated=True)
        v_norm = np.linalg.norm(mean_and_perron(ensemble).v)
        pool = fixpoint_pool(ensemble, 100_000, 40, seed=4)
        self.assertLess(pool.median_norm(), 0.01 * v_norm)

    def test_negative_slope_keeps_mass(self):
        for name in ('pass', 'tail'):
            ensemble = fixture(name, calibrated=True)
            v_norm = np.linalg.norm(mean_and_perron(ensemble).v)
            pool = fixpoint_pool(ensemble, 100_000, 40, seed=4)
            self.assertGreaterEqual(pool.median_norm(), 0.1 * v_norm, name)

    def test_pool_cap(self):
        with self.assertRaises(WorkCapExceeded):
            fixpoint_pool(fixture('pass'), Config.MAX_POOL_SIZE + 1, 1, seed=0)

    def test_mean_z_scores_exact_match(self):
        v = np.array([0.5, 0.75])
        pool = ParticlePool(np.tile(v, (10, 1)), 0, 0, 'x')
        np.testing.assert_array_equal(pool.mean_z_scores(v), [0.0, 0.0])
        self.assertTrue(np.all(np.isinf(pool.mean_z_scores(2 * v))))

    @unittest.skipUnless(SLOW, "long population run")
    def test_oracle_mean_near_v(self):
        ensemble = oracle(calibrated=True)
        v = mean_and_perron(ensemble).v
        pool = fixpoint_pool(ensemble, 1_000_000, 60, seed=2)
        np.testing.assert_allclose(pool.mean(), v, rtol=0.1)


class TestMomentProbe(unittest.TestCase):
    """Test the empirical moment verdicts."""

    def test_pool_too_small(self):
        pool = ParticlePool(np.ones((5000, 2)), 1, 0, 'x')
        with self.assertRaises(PoolTooSmall):
            moment_probe(pool, [1.0])

    def test_constant_pool_stable(self):
        pool = ParticlePool(np.ones((20_000, 2)), 1, 0, 'x')
        row = moment_probe(pool, [2.0])[0]
        self.assertEqual(row.sizes, [1000, 10_000, 20_000])
        self.assertEqual(row.verdict, 'stable')
        self.assertAlmostEqual(row.change, 0.0, places=12)
        self.assertIsNone(row.agrees)

    def test_late_outlier_diverging(self):
        samples = np.ones((20_000, 2)) / np.sqrt(2)
        samples[-1] = [1e6, 0.0]
        row = moment_probe(ParticlePool(samples, 1, 0, 'x'), [1.0])[0]
        self.assertEqual(row.verdict, 'diverging')

    def test_prediction_attached(self):
        ensemble = fixture('pass')
        grid = build_grid(2, 100)
        pool = ParticlePool(np.ones((10_000, 2)), 1, 0, 'x')
        row = moment_probe(pool, [1.5], ensemble=ensemble, grid=grid)[0]
        expected = solve_spectral(ensemble, 1.5, grid).kappa * 2 - 1
        self.assertAlmostEqual(row.prediction, expected, places=10)
        self.assertEqual(row.sizes, [1000, 10_000])

    def test_small_moments_always_finite(self):
        pool = ParticlePool(np.ones((10_000, 2)), 1, 0, 'x')
        row = moment_probe(pool, [0.5], ensemble=fixture('pass'), grid=build_grid(2, 100))[0]
        self.assertGreater(row.prediction, 0)
        self.assertTrue(row.agrees)


class TestNondegeneracy(unittest.TestCase):
    """Test the side-by-side nondegeneracy statements."""

    def setUp(self):
        self.ensemble = fixture('pass')
        self.v = mean_and_perron(self.ensemble).v

    def spread_pool(self, center):
        factors = np.tile([0.9, 1.1], 5000)[:, None]
        return ParticlePool(factors * center, 10, 0, 'x')

    def test_nondegenerate(self):
        report = nondegeneracy_report(self.ensemble, self.spread_pool(self.v), derivative(-0.1))
        self.assertTrue(report.slope_negative)
        self.assertTrue(report.mean_matches_v)
        self.assertTrue(report.mean_nonzero)
        self.assertTrue(report.consistent)

    def test_degenerate(self):
        report = nondegeneracy_report(self.ensemble, self.spread_pool(1e-4 * self.v), derivative(0.2))
        self.assertFalse(report.slope_negative)
        self.assertFalse(report.mean_matches_v)
        self.assertFalse(report.mean_nonzero)
        self.assertTrue(report.consistent)

    def test_contradiction_flagged(self):
        report = nondegeneracy_report(self.ensemble, self.spread_pool(1e-4 * self.v), derivative(-0.1))
        self.assertFalse(report.consistent)
        self.assertFalse(report.to_dict()['consistent'])

    def test_cascade_samples(self):
        cascade = np.vstack([0.5 * self.v, 1.5 * self.v])
        report = nondegeneracy_report(self.ensemble, self.spread_pool(self.v), derivative(-0.1),
                                      cascade_samples=cascade)
        self.assertTrue(report.cascade_mean_matches_v)


if __name__ == '__main__':
    unittest.main()
