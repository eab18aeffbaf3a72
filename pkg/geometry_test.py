"""
Test Suite for sphere geometry and cone algebra.
Covers unit vectors, geodesics, reflections, rotations, cone membership,
dual and primal projections, separation and interior margins.
"""

import unittest

import numpy as np

from cone_algebra import (PolyhedralCone, contains, from_labeled_sample, interior_margin, is_proper,
                          project_dual, project_primal, rotate_cone, separating_direction)
from errors import ConeCapError, DegenerateGeodesicError, InvalidInputError, PreconditionError
from sphere_core import (Reflection, ReflectionKind, UnitVector, geodesic_distance, geodesic_midpoint,
                         random_rotation, reflect, rotate)
from spherical_sampling import sample_cone_cap, sample_sphere

E1 = UnitVector([1.0, 0.0, 0.0])
E2 = UnitVector([0.0, 1.0, 0.0])
QUADRANT = PolyhedralCone(np.eye(2))
HALFPLANE = PolyhedralCone(np.array([[1.0, 0.0]]))


def separable_cone(n, m, rng):
    """Version-space cone of points labeled by a random halfspace (nonempty interior)."""
    points = sample_sphere(n, m, rng)
    target = sample_sphere(n, 1, rng)[0]
    labels = np.where(points @ target >= 0, 1, -1)
    return from_labeled_sample(list(points), labels)


class TestUnitVector(unittest.TestCase):
    """Construction rules for points on the sphere."""

    def test_rejects_non_unit_input(self):
        with self.assertRaises(InvalidInputError):
            UnitVector([1.1, 0.0])
        with self.assertRaises(InvalidInputError):
            UnitVector([1.0])
        with self.assertRaises(InvalidInputError):
            UnitVector.from_vector([0.0, 0.0])

    def test_renormalizes_small_deviation(self):
        v = UnitVector([1.0 + 5e-10, 0.0])
        self.assertAlmostEqual(np.linalg.norm(v.coords), 1.0, places=15)

    def test_coordinates_are_read_only(self):
        with self.assertRaises(ValueError):
            E1.coords[0] = 2.0

    def test_errors_render_records(self):
        try:
            UnitVector([2.0, 0.0])
        except ConeCapError as e:
            record = e.to_record()
        self.assertEqual(record['error'], 'InvalidInputError')
        self.assertIn('norm', record['details'])


class TestGeodesics(unittest.TestCase):
    """Distances and midpoints."""

    def test_distance_examples(self):
        self.assertAlmostEqual(geodesic_distance(E1, E1), 0.0)
        self.assertAlmostEqual(geodesic_distance(E1, -E1), np.pi)
        self.assertAlmostEqual(geodesic_distance(E1, E2), np.pi / 2)

    def test_distance_rejects_bad_input(self):
        with self.assertRaises(InvalidInputError):
            geodesic_distance([1.0, 0.1, 0.0], E1)
        with self.assertRaises(InvalidInputError):
            geodesic_distance([1.0, 0.0], E1)

    def test_midpoint_examples(self):
        np.testing.assert_allclose(geodesic_midpoint(E1, E2).coords, [1 / np.sqrt(2), 1 / np.sqrt(2), 0.0])
        np.testing.assert_allclose(geodesic_midpoint(E1, E1).coords, E1.coords)
        midpoint = geodesic_midpoint([1.0, 0.0], [0.0, 1.0])
        self.assertAlmostEqual(np.arctan2(midpoint.coords[1], midpoint.coords[0]), np.pi / 4)

    def test_midpoint_is_equidistant(self):
        rng = np.random.default_rng(3)
        a, b = sample_sphere(4, 2, rng)
        m = geodesic_midpoint(a, b)
        self.assertAlmostEqual(geodesic_distance(a, m), geodesic_distance(m, b), places=12)
        self.assertAlmostEqual(2 * geodesic_distance(a, m), geodesic_distance(a, b), places=12)

    def test_antipodal_midpoint_is_degenerate(self):
        with self.assertRaises(DegenerateGeodesicError):
            geodesic_midpoint(E1, -E1)


class TestReflectionsAndRotations(unittest.TestCase):
    """Isometries of the sphere."""

    def test_reflection_examples(self):
        hyperplane = Reflection(ReflectionKind.HYPERPLANE, E1)
        np.testing.assert_allclose(reflect(hyperplane, E1).coords, -E1.coords)
        axis = Reflection(ReflectionKind.AXIS, E1)
        np.testing.assert_allclose(reflect(axis, E2).coords, -E2.coords, atol=1e-15)
        diagonal = Reflection(ReflectionKind.AXIS, UnitVector.from_vector([1.0, 1.0]))
        np.testing.assert_allclose(reflect(diagonal, [1.0, 0.0]).coords, [0.0, 1.0], atol=1e-15)

    def test_reflections_are_involutive_isometries(self):
        rng = np.random.default_rng(11)
        z, p, q = sample_sphere(5, 3, rng)
        for kind in ReflectionKind:
            r = Reflection(kind, UnitVector(z))
            self.assertAlmostEqual(geodesic_distance(reflect(r, p), reflect(r, q)),
                                   geodesic_distance(p, q), places=12)
            np.testing.assert_allclose(reflect(r, reflect(r, p)).coords, p, atol=1e-12)
            np.testing.assert_allclose(r.matrix() @ r.matrix().T, np.eye(5), atol=1e-12)

    def test_random_rotation_is_special_orthogonal(self):
        for dim in (2, 3, 6):
            matrix = random_rotation(dim, np.random.default_rng(dim))
            np.testing.assert_allclose(matrix.T @ matrix, np.eye(dim), atol=1e-10)
            self.assertAlmostEqual(np.linalg.det(matrix), 1.0, places=10)

    def test_rotation_inverse_and_determinism(self):
        first = random_rotation(3, np.random.default_rng(5))
        second = random_rotation(3, np.random.default_rng(5))
        np.testing.assert_array_equal(first, second)
        np.testing.assert_allclose(rotate(first.T, rotate(first, E1)).coords, E1.coords, atol=1e-10)


class TestConeConstruction(unittest.TestCase):
    """Cones from normals and labeled samples."""

    def test_from_labeled_sample(self):
        cone = from_labeled_sample([E1], [1])
        np.testing.assert_allclose(cone.normals, [[1.0, 0.0, 0.0]])
        flipped = from_labeled_sample([E1], [-1])
        np.testing.assert_allclose(flipped.normals, [[-1.0, 0.0, 0.0]])
        quadrant = from_labeled_sample([[1.0, 0.0], [0.0, 1.0]], [1, 1])
        np.testing.assert_allclose(quadrant.normals, np.eye(2))

    def test_from_labeled_sample_rejects_bad_input(self):
        with self.assertRaises(InvalidInputError):
            from_labeled_sample([], [])
        with self.assertRaises(InvalidInputError):
            from_labeled_sample([E1], [0])
        with self.assertRaises(InvalidInputError):
            from_labeled_sample([E1, E2], [1])

    def test_duplicate_normals_are_merged(self):
        cone = PolyhedralCone(np.array([[1.0, 0.0], [2.0, 0.0], [0.0, 1.0]]))
        self.assertEqual(cone.size, 2)

    def test_cones_are_proper(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            normals = rng.standard_normal((4, 3))
            self.assertTrue(is_proper(PolyhedralCone(normals)))


class TestMembershipAndProjections(unittest.TestCase):
    """contains, project_dual, project_primal."""

    def test_contains_examples(self):
        self.assertTrue(contains(QUADRANT, [1 / np.sqrt(2), 1 / np.sqrt(2)]))
        self.assertFalse(contains(QUADRANT, [-1.0, 0.0]))
        self.assertTrue(contains(QUADRANT, [1.0, -1e-12], tol=1e-9))
        self.assertFalse(contains(QUADRANT, [1.0, -1e-12], tol=0.0))

    def test_project_dual_examples(self):
        point, coefficients = project_dual(QUADRANT, [1.0, 1.0])
        np.testing.assert_allclose(point, [1.0, 1.0])
        self.assertAlmostEqual(coefficients.residual, 0.0)

        point, coefficients = project_dual(QUADRANT, [-1.0, -1.0])
        np.testing.assert_allclose(point, [0.0, 0.0])
        self.assertAlmostEqual(coefficients.residual, np.sqrt(2))

        point, coefficients = project_dual(HALFPLANE, [0.6, 0.8])
        np.testing.assert_allclose(point, [0.6, 0.0])
        self.assertAlmostEqual(coefficients.residual, 0.8)
        self.assertTrue(np.all(coefficients.alpha >= 0))

    def test_project_primal_examples(self):
        np.testing.assert_allclose(project_primal(QUADRANT, [1.0, 1.0]), [1.0, 1.0])
        np.testing.assert_allclose(project_primal(QUADRANT, [-1.0, 1.0]), [0.0, 1.0])
        np.testing.assert_allclose(project_primal(HALFPLANE, [-1.0, 0.0]), [0.0, 0.0])

    def test_moreau_decomposition_is_orthogonal(self):
        rng = np.random.default_rng(7)
        cone = PolyhedralCone(rng.standard_normal((5, 4)))
        for w in rng.standard_normal((20, 4)):
            primal = project_primal(cone, w)
            dual_part, _ = project_dual(cone, -w)
            self.assertTrue(contains(cone, primal, 1e-9))
            self.assertAlmostEqual(float(np.dot(primal, dual_part)), 0.0, places=9)

    def test_dual_points_pair_nonnegatively_with_cone_points(self):
        rng = np.random.default_rng(8)
        cone = separable_cone(3, 4, rng)
        cloud = sample_cone_cap(cone, 500, 8)
        for weights in rng.exponential(size=(10, cone.size)):
            p = weights @ cone.normals
            _, coefficients = project_dual(cone, p)
            self.assertLess(coefficients.residual, 1e-10)
            self.assertGreaterEqual(float(np.min(cloud.points @ p)), -1e-8)

    def test_rotation_commutes_with_projection(self):
        rng = np.random.default_rng(4)
        cone = PolyhedralCone(rng.standard_normal((4, 3)))
        matrix = random_rotation(3, rng)
        w = rng.standard_normal(3)
        np.testing.assert_allclose(project_primal(rotate_cone(cone, matrix), matrix @ w),
                                   matrix @ project_primal(cone, w), atol=1e-10)


class TestSeparation(unittest.TestCase):
    """Separating directions and interior margins."""

    def test_separating_direction_examples(self):
        np.testing.assert_allclose(separating_direction(HALFPLANE, [-1.0, 0.0]).coords, [1.0, 0.0])
        np.testing.assert_allclose(separating_direction(QUADRANT, [-1.0, 0.0]).coords, [1.0, 0.0])
        diagonal = separating_direction(QUADRANT, [-1 / np.sqrt(2), -1 / np.sqrt(2)])
        np.testing.assert_allclose(diagonal.coords, [1 / np.sqrt(2), 1 / np.sqrt(2)])

    def test_separating_direction_requires_outside_point(self):
        with self.assertRaises(PreconditionError):
            separating_direction(QUADRANT, [1 / np.sqrt(2), 1 / np.sqrt(2)])

    def test_separating_direction_separates(self):
        rng = np.random.default_rng(21)
        cone = separable_cone(3, 5, rng)
        cloud = sample_cone_cap(cone, 400, 21)
        for w in sample_sphere(3, 30, rng):
            if contains(cone, w, 1e-9):
                continue
            z = separating_direction(cone, w)
            self.assertLess(float(np.dot(z.coords, w)), 0.0)
            self.assertGreaterEqual(float(np.min(cloud.points @ z.coords)), -1e-8)

    def test_interior_margin_examples(self):
        v, margin = interior_margin(PolyhedralCone(np.array([[1.0, 0.0, 0.0]])))
        np.testing.assert_allclose(v.coords, [1.0, 0.0, 0.0], atol=1e-9)
        self.assertAlmostEqual(margin, 1.0)

        v, margin = interior_margin(QUADRANT)
        np.testing.assert_allclose(v.coords, [1 / np.sqrt(2), 1 / np.sqrt(2)], atol=1e-6)
        self.assertAlmostEqual(margin, 1 / np.sqrt(2), places=6)

        with self.assertLogs('cone_algebra', level='WARNING'):
            _, margin = interior_margin(PolyhedralCone(np.array([[1.0, 0.0], [-1.0, 0.0]])))
        self.assertLessEqual(margin, 0.0)

    def test_interior_margin_of_a_thin_cone(self):
        # two half-planes overlapping in an arc of width 0.002
        angle = np.pi - 0.002
        cone = PolyhedralCone(np.array([[1.0, 0.0], [np.cos(angle), np.sin(angle)]]))
        v, margin = interior_margin(cone)
        self.assertGreater(margin, 0.0)
        self.assertLessEqual(margin, np.sin(0.001) + 1e-12)
        self.assertTrue(contains(cone, v))


if __name__ == '__main__':
    unittest.main(verbosity=2)
