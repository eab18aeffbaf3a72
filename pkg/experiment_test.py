"""
Test Suite for the halfspace learning experiment.
Covers labeling, misclassification probabilities, the learning rules,
Omega estimation, the circle decomposition and experiment reports.
"""

import itertools
import unittest

import numpy as np

from errors import InvalidInputError, NonConvergenceError
from halfspace_lab import (ExperimentConfig, LabeledSample, LearningRule, RuleKind, _train_perceptron,
                           apply_rule, empirical_disagreement, label_points, misclass_prob, mistake_bound_epochs,
                           omega_decomposition_2d, omega_estimate, random_instance, rule_cloud,
                           run_experiment, version_space_arc)
from sphere_core import UnitVector, geodesic_distance, random_rotation, rotate
from spherical_sampling import rotate_cloud, sample_sphere

E1 = UnitVector([1.0, 0.0, 0.0])
E2 = UnitVector([0.0, 1.0, 0.0])


def target_rule(sample, seed, target):
    return target


def opposite_rule(sample, seed, target):
    return -target


def fixed_rule(sample, seed, target):
    return UnitVector.basis(sample.dim, 0)


def thin_arc_failing_rule(sample, seed, target):
    phi0, phi1 = version_space_arc(sample)
    if phi1 - phi0 < 0.5:
        raise NonConvergenceError("arc too thin")
    return target


class TestLabelsAndErrors(unittest.TestCase):
    """Labeling rule and the rho/pi identity."""

    def test_label_points(self):
        np.testing.assert_array_equal(label_points(E1, [E1.coords, -E1.coords]), [1, -1])
        np.testing.assert_array_equal(label_points(E1, [E2.coords]), [1])

    def test_misclass_prob(self):
        self.assertAlmostEqual(misclass_prob(E1, E1), 0.0)
        self.assertAlmostEqual(misclass_prob(-E1, E1), 1.0)
        self.assertAlmostEqual(misclass_prob(E2, E1), 0.5)

    def test_empirical_disagreement_matches_distance(self):
        rng = np.random.default_rng(51)
        for method, n_test in (('iid', 50_000), ('sobol', 2 ** 15)):
            for v, u in zip(sample_sphere(3, 5, rng), sample_sphere(3, 5, rng)):
                p = misclass_prob(v, u)
                rate = empirical_disagreement(v, u, n_test, rng, method=method)
                self.assertLess(abs(rate - p), 5 * np.sqrt(p * (1 - p) / n_test) + 1e-12)

    def test_empirical_disagreement_rejects_unknown_method(self):
        with self.assertRaises(InvalidInputError):
            empirical_disagreement(E1, E2, 100, np.random.default_rng(0), method='grid')

    def test_random_instance_is_consistent(self):
        target, sample = random_instance(4, 6, np.random.default_rng(52))
        self.assertEqual(sample.size, 6)
        self.assertEqual(sample.dim, 4)
        np.testing.assert_array_equal(label_points(target, sample.points), sample.labels)
        with self.assertRaises(InvalidInputError):
            random_instance(3, 0, np.random.default_rng(0))

    def test_labeled_sample_validation(self):
        with self.assertRaises(InvalidInputError):
            LabeledSample(np.eye(2), np.array([1]))
        with self.assertRaises(InvalidInputError):
            LabeledSample(np.eye(2), np.array([1, 2]))


class TestLearningRules(unittest.TestCase):
    """Outputs of the individual rules."""

    def test_rule_parsing(self):
        self.assertIs(RuleKind.parse('Perceptron'), RuleKind.PERCEPTRON)
        with self.assertRaises(InvalidInputError):
            RuleKind.parse('svm')
        self.assertFalse(RuleKind.PERCEPTRON.uses_cloud)
        self.assertIsNone(LearningRule(kind=RuleKind.EUCLIDEAN_CENTROID).g)

    def test_single_example_forces_optimal_output(self):
        sample = LabeledSample(np.array([[1.0, 0.0, 0.0]]), np.array([1]))
        rule = LearningRule(kind=RuleKind.OPTIMAL, n_points=20_000)
        output = apply_rule(rule, sample, 53)
        self.assertLess(geodesic_distance(output, E1), 0.05)

    def test_euclidean_centroid_is_normalized_cloud_mean(self):
        sample = LabeledSample(np.array([[1.0, 0.0, 0.0]]), np.array([1]))
        rule = LearningRule(kind=RuleKind.EUCLIDEAN_CENTROID, n_points=5000)
        cloud = rule_cloud(rule, sample, 54)
        output = apply_rule(rule, sample, 54, cloud=cloud)
        np.testing.assert_allclose(output.coords, cloud.mean_direction() / np.linalg.norm(cloud.mean_direction()))
        self.assertLess(geodesic_distance(output, E1), 1e-9)

    def test_cloud_rules_stay_in_version_space(self):
        _, sample = random_instance(3, 5, np.random.default_rng(55))
        for kind in (RuleKind.OPTIMAL, RuleKind.SPHERICAL_CENTROID):
            output = apply_rule(LearningRule(kind=kind, n_points=3000), sample, 55)
            self.assertTrue(np.all(sample.cone().margins(output.coords) >= -1e-6))

    def test_perceptron_is_consistent(self):
        _, sample = random_instance(3, 8, np.random.default_rng(56))
        output = apply_rule(LearningRule(kind=RuleKind.PERCEPTRON), sample, 56)
        np.testing.assert_array_equal(label_points(output, sample.points), sample.labels)

    def test_perceptron_epoch_cap(self):
        contradictory = LabeledSample(np.array([[1.0, 0.0], [1.0, 0.0]]), np.array([1, -1]))
        with self.assertRaises(NonConvergenceError):
            _train_perceptron(contradictory, epoch_cap=5)
        self.assertIsNone(mistake_bound_epochs(contradictory))

    def test_mistake_bound_of_the_quadrant(self):
        # margin 1/sqrt(2) allows at most two mistakes
        bound = mistake_bound_epochs(LabeledSample(np.eye(2), np.array([1, 1])))
        self.assertIn(bound, (3, 4))

    def test_perceptron_learns_thin_version_spaces(self):
        rng = np.random.default_rng(63)
        for _ in range(30):
            points = sample_sphere(2, 3, rng)
            for signs in itertools.product((1, -1), repeat=3):
                sample = LabeledSample(points, np.array(signs))
                arc = version_space_arc(sample)
                # narrower arcs push the mistake bound past the epoch limit
                if arc is None or arc[1] - arc[0] < 2e-3:
                    continue
                output = _train_perceptron(sample, epoch_cap=1)
                np.testing.assert_array_equal(label_points(output, sample.points), sample.labels)

    def test_rules_are_rotation_equivariant(self):
        rng = np.random.default_rng(57)
        _, sample = random_instance(3, 5, rng)
        matrix = random_rotation(3, rng)
        rotated = sample.rotated(matrix)
        for kind in (RuleKind.EUCLIDEAN_CENTROID, RuleKind.SPHERICAL_CENTROID, RuleKind.PERCEPTRON):
            rule = LearningRule(kind=kind, n_points=3000)
            cloud = rule_cloud(rule, sample, 57) if kind.uses_cloud else None
            moved_cloud = rotate_cloud(cloud, matrix) if cloud is not None else None
            base = apply_rule(rule, sample, 57, cloud=cloud)
            moved = apply_rule(rule, rotated, 57, cloud=moved_cloud)
            self.assertLess(geodesic_distance(rotate(matrix, base), moved), 1e-6, kind.value)


class TestOmega(unittest.TestCase):
    """Monte Carlo Omega estimates."""

    def test_oracle_rules(self):
        exact = omega_estimate(target_rule, 3, 5, 100, 58)
        self.assertAlmostEqual(exact.omega, 0.0)
        self.assertEqual(exact.trials, 100)
        self.assertEqual(exact.consistent, 100)

        wrong = omega_estimate(opposite_rule, 3, 5, 100, 58)
        self.assertAlmostEqual(wrong.omega, 1.0)

        blind = omega_estimate(fixed_rule, 3, 5, 2000, 58)
        self.assertLess(abs(blind.omega - 0.5), 3 * blind.std_error)

    def test_trials_must_be_positive(self):
        with self.assertRaises(InvalidInputError):
            omega_estimate(target_rule, 3, 5, 0, 0)
        with self.assertRaises(InvalidInputError):
            run_experiment(ExperimentConfig(trials=0))

    def test_estimate_does_not_depend_on_threads(self):
        rule = LearningRule(kind=RuleKind.EUCLIDEAN_CENTROID, n_points=500)
        serial = omega_estimate(rule, 3, 4, 6, 59, threads=1)
        threaded = omega_estimate(rule, 3, 4, 6, 59, threads=3)
        self.assertEqual(serial, threaded)

    def test_circle_decomposition_agrees_with_direct_estimate(self):
        rule = LearningRule(kind=RuleKind.PERCEPTRON)
        direct = omega_estimate(rule, 2, 3, 600, 60)
        summed = omega_decomposition_2d(rule, 3, 150, 60)
        self.assertEqual(direct.failures, 0)
        self.assertLess(abs(direct.omega - summed.omega), 3 * np.hypot(direct.std_error, summed.std_error))

    def test_labelings_partition_the_circle(self):
        # a rule that ignores the data averages rho/pi over the whole circle on every sample
        estimate = omega_decomposition_2d(fixed_rule, 3, 10, 61)
        self.assertAlmostEqual(estimate.omega, 0.5, places=8)
        self.assertLess(estimate.std_error, 1e-8)

    def test_failed_labelings_keep_their_sample(self):
        estimate = omega_decomposition_2d(thin_arc_failing_rule, 3, 40, 64)
        self.assertEqual(estimate.trials, 40)
        self.assertGreater(estimate.failures, 0)
        self.assertTrue(0.0 < estimate.omega < 0.5)


class TestVersionSpaceArc(unittest.TestCase):
    """Version spaces on the circle."""

    def test_quadrant_arc(self):
        arc = version_space_arc(LabeledSample(np.eye(2), np.array([1, 1])))
        self.assertAlmostEqual(arc[0], 0.0)
        self.assertAlmostEqual(arc[1], np.pi / 2)

    def test_halfplane_arc(self):
        phi0, phi1 = version_space_arc(LabeledSample(np.array([[1.0, 0.0]]), np.array([1])))
        self.assertAlmostEqual(phi0, 3 * np.pi / 2)
        self.assertAlmostEqual(phi1 - phi0, np.pi)

    def test_contradictory_labels_have_no_arc(self):
        sample = LabeledSample(np.array([[1.0, 0.0], [1.0, 0.0]]), np.array([1, -1]))
        self.assertIsNone(version_space_arc(sample))

    def test_arc_needs_the_circle(self):
        with self.assertRaises(InvalidInputError):
            version_space_arc(LabeledSample(np.eye(3), np.array([1, 1, 1])))


class TestExperimentReport(unittest.TestCase):
    """run_experiment structure and determinism."""

    def setUp(self):
        self.config = ExperimentConfig(rules=('optimal', 'euclidean_centroid', 'perceptron'), n=3, m=5,
                                       trials=8, seed=62, n_points=1000)

    def test_report_structure(self):
        report = run_experiment(self.config)
        self.assertEqual([row.name for row in report.rules], ['optimal', 'euclidean_centroid', 'perceptron'])
        self.assertIsNone(report.row('optimal').delta_vs_optimal)
        self.assertIsNotNone(report.row('perceptron').delta_vs_optimal)
        for row in report.rules:
            self.assertEqual(row.trials + row.failures, 8)
            self.assertTrue(0.0 <= row.omega <= 1.0)
        self.assertEqual(report.row('perceptron').consistent, 8)
        self.assertEqual(report.row('perceptron').failures, 0)
        self.assertEqual(report.row('perceptron').retries, 0)
        self.assertEqual(report.to_dict()['config']['rules'], ['optimal', 'euclidean_centroid', 'perceptron'])
        with self.assertRaises(KeyError):
            report.row('spherical_centroid')

    def test_identical_seeds_give_identical_reports(self):
        first = run_experiment(self.config, threads=1).to_dict()
        second = run_experiment(self.config, threads=2).to_dict()
        self.assertEqual(first, second)

    def test_duplicate_rules_are_rejected(self):
        with self.assertRaises(InvalidInputError):
            run_experiment(ExperimentConfig(rules=('perceptron', 'perceptron'), trials=2))


if __name__ == '__main__':
    unittest.main(verbosity=2)
