"""
Test Suite for the sphere optimizer.
Checks descent against closed forms and the circle oracle, multistart
clustering, equivariance and trace export.
"""

import os
import shutil
import tempfile
import unittest

import numpy as np
import pandas as pd

from cone_algebra import PolyhedralCone, contains, project_dual
from errors import InvalidInputError
from halfspace_lab import random_instance
from psi_objective import GKind
from sphere_core import UnitVector, geodesic_distance, random_rotation, rotate
from sphere_optimizer import (OptOptions, OptResult, cluster_minima, minimize_from,
                              multistart_minimize, write_trace_csv)
from spherical_sampling import ConeCloud, rotate_cloud, sample_cone_cap, sample_sphere

E1 = UnitVector([1.0, 0.0, 0.0])


def single_point_cloud() -> ConeCloud:
    return ConeCloud(points=np.array([[1.0, 0.0, 0.0]]), measure_estimate=1.0, attempts=1, accepted=1)


def angle(point: UnitVector) -> float:
    return float(np.mod(np.arctan2(point.coords[1], point.coords[0]), 2.0 * np.pi))


class TestMinimizeFrom(unittest.TestCase):
    """Single descent runs."""

    def test_single_point_cloud(self):
        result = minimize_from([0.0, 1.0, 0.0], single_point_cloud(), GKind.IDENTITY)
        self.assertTrue(result.settled)
        self.assertLess(geodesic_distance(result.minimizer, E1), 1e-6)
        self.assertLess(result.psi_value, 1e-6)

    def test_quadrant_minimizer_angle(self):
        cloud = sample_cone_cap(PolyhedralCone(np.eye(2)), 100_000, 31)
        start = sample_sphere(2, 1, np.random.default_rng(31))[0]
        result = minimize_from(start, cloud, GKind.IDENTITY)
        self.assertTrue(result.settled)
        self.assertAlmostEqual(angle(result.minimizer), np.pi / 4, delta=0.01)

    def test_two_one_minus_cos_minimizer_is_normalized_mean(self):
        rng = np.random.default_rng(32)
        for i in range(5):
            _, sample = random_instance(int(rng.integers(2, 6)), int(rng.integers(1, 7)), rng)
            cloud = sample_cone_cap(sample.cone(), 2000, 32 + i)
            start = sample_sphere(cloud.dim, 1, rng)[0]
            result = minimize_from(start, cloud, GKind.TWO_ONE_MINUS_COS)
            target = UnitVector.from_vector(cloud.mean_direction())
            self.assertTrue(result.settled)
            self.assertLess(geodesic_distance(result.minimizer, target), 1e-6)

    def test_trace_is_monotone(self):
        cloud = sample_cone_cap(PolyhedralCone(np.eye(3)), 3000, 33)
        result = minimize_from([-1.0, 0.0, 0.0], cloud, GKind.SQUARE, OptOptions(keep_trace=True))
        values = [row[1] for row in result.trace]
        self.assertGreater(len(values), 1)
        self.assertTrue(all(b <= a + 1e-12 for a, b in zip(values, values[1:])))
        self.assertEqual([row[0] for row in result.trace], list(range(len(values))))

    def test_iteration_cap(self):
        cloud = sample_cone_cap(PolyhedralCone(np.eye(3)), 1000, 34)
        with self.assertLogs('sphere_optimizer', level='WARNING'):
            result = minimize_from([-1.0, 0.0, 0.0], cloud, GKind.IDENTITY, OptOptions(max_iters=1))
        self.assertFalse(result.settled)
        self.assertEqual(result.iterations, 1)

    def test_rejects_bad_input(self):
        cloud = single_point_cloud()
        with self.assertRaises(InvalidInputError):
            minimize_from([1.0, 0.0], cloud, GKind.IDENTITY)
        with self.assertRaises(InvalidInputError):
            minimize_from([0.0, 1.0, 0.0], cloud, GKind.IDENTITY, OptOptions(max_iters=0))

    def test_rotation_equivariance(self):
        rng = np.random.default_rng(35)
        _, sample = random_instance(3, 5, rng)
        cloud = sample_cone_cap(sample.cone(), 3000, 35)
        for _ in range(3):
            start = sample_sphere(3, 1, rng)[0]
            matrix = random_rotation(3, rng)
            base = minimize_from(start, cloud, GKind.IDENTITY)
            moved = minimize_from(matrix @ start, rotate_cloud(cloud, matrix), GKind.IDENTITY)
            self.assertLess(geodesic_distance(rotate(matrix, base.minimizer), moved.minimizer), 1e-6)


class TestMultistart(unittest.TestCase):
    """Multistart descent and minimum clustering."""

    def setUp(self):
        self.test_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.test_dir, ignore_errors=True)

    def test_single_point_cloud_has_one_minimum(self):
        report = multistart_minimize(single_point_cloud(), GKind.IDENTITY, 20, 36)
        self.assertEqual(len(report.clusters), 1)
        self.assertEqual(report.best.multiplicity, 20)
        self.assertLess(geodesic_distance(report.best.representative, E1), 1e-6)

    def test_quadrant_has_one_minimum(self):
        cloud = sample_cone_cap(PolyhedralCone(np.eye(2)), 20_000, 37)
        report = multistart_minimize(cloud, GKind.IDENTITY, 20, 37)
        self.assertEqual(len(report.clusters), 1)
        self.assertAlmostEqual(angle(report.best.representative), np.pi / 4, delta=0.01)

    def test_random_instance_has_one_minimum(self):
        _, sample = random_instance(4, 5, np.random.default_rng(38))
        cloud = sample_cone_cap(sample.cone(), 5000, 38, antithetic=True)
        report = multistart_minimize(cloud, GKind.IDENTITY, 20, 38)
        self.assertEqual(len(report.clusters), 1)
        self.assertTrue(contains(sample.cone(), report.best.representative, 1e-6))
        _, coefficients = project_dual(sample.cone(), report.best.representative)
        self.assertLess(coefficients.residual, 1e-4)

    def test_report_does_not_depend_on_threads(self):
        cloud = sample_cone_cap(PolyhedralCone(np.eye(3)), 2000, 39)
        serial = multistart_minimize(cloud, GKind.SQUARE, 6, 39, threads=1)
        threaded = multistart_minimize(cloud, GKind.SQUARE, 6, 39, threads=3)
        for a, b in zip(serial.results, threaded.results):
            np.testing.assert_array_equal(a.minimizer.coords, b.minimizer.coords)

    def test_initial_start_replaces_first_start(self):
        cloud = sample_cone_cap(PolyhedralCone(np.eye(3)), 2000, 40)
        report = multistart_minimize(cloud, GKind.IDENTITY, 2, 40, initial=cloud.mean_direction(),
                                     opts=OptOptions(keep_trace=True))
        first_value = report.results[0].trace[0][1]
        self.assertLess(first_value, np.pi / 4)

    def test_needs_two_starts(self):
        with self.assertRaises(InvalidInputError):
            multistart_minimize(single_point_cloud(), GKind.IDENTITY, 1, 0)
        with self.assertRaises(InvalidInputError):
            multistart_minimize(single_point_cloud(), GKind.IDENTITY, 4, 0, cluster_radius=0.0)

    def test_cluster_minima(self):
        def result(coords, psi, converged=True):
            return OptResult(minimizer=UnitVector.from_vector(coords), psi_value=psi, iterations=1,
                             grad_norm=0.0, converged=converged)

        results = [
            result([1.0, 0.0], 0.5),
            result([0.0, 1.0], 0.2),
            result([1.0, 1e-5], 0.5),
            result([-1.0, 0.0], 0.1, converged=False),
        ]
        clusters = cluster_minima(results, 1e-3)
        self.assertEqual(len(clusters), 2)
        self.assertEqual(clusters[0].members, (1,))
        self.assertEqual(clusters[1].members, (0, 2))
        self.assertEqual(clusters[1].multiplicity, 2)

    def test_trace_csv(self):
        cloud = sample_cone_cap(PolyhedralCone(np.eye(3)), 1000, 41)
        result = minimize_from([0.0, 0.0, -1.0], cloud, GKind.IDENTITY, OptOptions(keep_trace=True))
        path = os.path.join(self.test_dir, 'trace.csv')
        write_trace_csv(result, path)
        df = pd.read_csv(path)
        self.assertEqual(list(df.columns), ['iter', 'psi', 'grad_norm'])
        self.assertEqual(len(df), len(result.trace))

        untraced = minimize_from([0.0, 0.0, -1.0], cloud, GKind.IDENTITY)
        with self.assertRaises(InvalidInputError):
            write_trace_csv(untraced, path)


if __name__ == '__main__':
    unittest.main(verbosity=2)
