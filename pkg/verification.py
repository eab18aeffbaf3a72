"""
Invariant suite behind the `verify` command.

Each check draws from its own substream of the master seed, returns a
pass flag with a JSON-ready detail record, and never depends on the
worker count. Reduced sizes run by default; `full` switches to the
acceptance sizes.
"""

import logging
import time
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from cone_algebra import contains, is_proper, project_dual, project_primal, separating_direction
from errors import ConeCapError, InvalidInputError
from halfspace_lab import (ExperimentConfig, LabeledSample, LearningRule, RuleKind, apply_rule,
                           empirical_disagreement, misclass_prob, omega_decomposition_2d,
                           omega_estimate, random_instance, run_experiment, version_space_arc)
from psi_objective import GKind, argmin_exact_2d, pointwise_values, psi_exact_2d, psi_grad_saa, psi_saa
from rng_streams import child_seed, substream
from sphere_core import UnitVector, geodesic_distance, geodesic_midpoint, random_rotation, rotate
from sphere_optimizer import minimize_from, multistart_minimize
from spherical_sampling import rotate_cloud, sample_cone_cap, sample_sphere

logger = logging.getLogger(__name__)

MIN_PAIR_SEPARATION = 0.05
DETERMINISM_WORKERS = 3


@dataclass(frozen=True)
class SuiteSizes:
    separation_cones: int
    fd_cases: int
    oracle_cases: int
    m1_points: int
    quadrant_points: int
    mean_instances: int
    location_instances: int
    location_points: int
    unique_instances: int
    unique_points: int
    unique_starts: int
    midpoint_triples: int
    midpoint_points: int
    disagreement_pairs: int
    test_exponent: int
    rotations: int
    rotation_points: int
    omega_trials: int
    omega_points: int
    decomposition_trials: int


QUICK = SuiteSizes(separation_cones=20, fd_cases=20, oracle_cases=20, m1_points=20000,
                   quadrant_points=20000, mean_instances=20, location_instances=10,
                   location_points=4000, unique_instances=10, unique_points=3000, unique_starts=8,
                   midpoint_triples=40, midpoint_points=3000, disagreement_pairs=10, test_exponent=15,
                   rotations=5, rotation_points=3000, omega_trials=40, omega_points=3000,
                   decomposition_trials=200)

FULL = SuiteSizes(separation_cones=500, fd_cases=100, oracle_cases=100, m1_points=50000,
                  quadrant_points=100000, mean_instances=100, location_instances=100,
                  location_points=10000, unique_instances=100, unique_points=10000, unique_starts=20,
                  midpoint_triples=200, midpoint_points=10000, disagreement_pairs=50, test_exponent=17,
                  rotations=50, rotation_points=10000, omega_trials=500, omega_points=20000,
                  decomposition_trials=1000)


@dataclass
class SuiteContext:
    seed: int
    threads: int
    sizes: SuiteSizes

    def rng(self, check: str, *indices: int) -> np.random.Generator:
        return substream(self.seed, f"verify-{check}", *indices)

    def child(self, check: str, *indices: int) -> int:
        return child_seed(self.seed, f"verify-{check}", *indices)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: Dict

    def to_dict(self) -> Dict:
        return {'name': self.name, 'pass': self.passed, 'detail': self.detail}


def _random_sample(rng: np.random.Generator, dims: Sequence[int],
                   sizes: Sequence[int]) -> LabeledSample:
    n = int(rng.choice(dims))
    m = int(rng.choice(sizes))
    _, sample = random_instance(n, m, rng)
    return sample


def _tangent(rng: np.random.Generator, w: np.ndarray) -> np.ndarray:
    direction = rng.standard_normal(w.size)
    direction -= np.dot(direction, w) * w
    return direction / np.linalg.norm(direction)


def check_separation(ctx: SuiteContext) -> Tuple[bool, Dict]:
    """Separating directions, Moreau orthogonality and properness on random version-space cones."""
    failures = []
    worst_dual = worst_cap = worst_orthogonality = 0.0
    for i in range(ctx.sizes.separation_cones):
        rng = ctx.rng('separation', i)
        cone = _random_sample(rng, range(2, 6), range(1, 7)).cone()
        w = sample_sphere(cone.dim, 1, rng)[0]
        while contains(cone, w, 1e-9):
            w = sample_sphere(cone.dim, 1, rng)[0]

        z = separating_direction(cone, w)
        _, coefficients = project_dual(cone, z)
        cloud = sample_cone_cap(cone, 200, ctx.child('separation', i))
        cap_margin = float(np.min(cloud.points @ z.coords))
        projection = project_primal(cone, w)
        orthogonality = abs(float(np.dot(projection, projection - w)))

        worst_dual = max(worst_dual, coefficients.residual)
        worst_cap = min(worst_cap, cap_margin)
        worst_orthogonality = max(worst_orthogonality, orthogonality)
        ok = (np.dot(z.coords, w) < 0 and coefficients.residual < 1e-8 and cap_margin >= -1e-8
              and contains(cone, projection, 1e-9) and orthogonality < 1e-9 and is_proper(cone))
        if not ok:
            failures.append(i)
    return not failures, {'cones': ctx.sizes.separation_cones, 'failed': failures,
                          'max_dual_residual': worst_dual, 'min_cap_inner': worst_cap,
                          'max_moreau_inner': worst_orthogonality}


def check_gradient(ctx: SuiteContext) -> Tuple[bool, Dict]:
    """Directional derivatives against central differences along the retraction curve."""
    step = 1e-5
    worst = 0.0
    worst_tangency = 0.0
    kinds = list(GKind)
    for i in range(ctx.sizes.fd_cases):
        rng = ctx.rng('gradient', i)
        cone = _random_sample(rng, range(2, 6), range(1, 5)).cone()
        cloud = sample_cone_cap(cone, 500, ctx.child('gradient', i))
        g = kinds[i % len(kinds)]
        # keep clear of the kinks at cloud points and their antipodes
        while True:
            w = sample_sphere(cone.dim, 1, rng)[0]
            sines = np.linalg.norm(cloud.points - np.outer(cloud.points @ w, w), axis=1)
            if sines.min() > 1e-3:
                break
        v = _tangent(rng, w)
        forward = (w + step * v) / np.linalg.norm(w + step * v)
        backward = (w - step * v) / np.linalg.norm(w - step * v)
        fd = float(np.mean(pointwise_values(forward, cloud, g) - pointwise_values(backward, cloud, g))) / (2 * step)
        gradient = psi_grad_saa(w, cloud, g).vector
        worst = max(worst, abs(float(np.dot(gradient, v)) - fd))
        worst_tangency = max(worst_tangency, abs(float(np.dot(gradient, w))))
    return worst < 1e-5 and worst_tangency < 1e-10, {'cases': ctx.sizes.fd_cases, 'max_fd_gap': worst,
                                                      'max_tangency': worst_tangency}


def check_oracle(ctx: SuiteContext) -> Tuple[bool, Dict]:
    """SAA estimates on the circle against exact quadrature."""
    misses = 0
    kinds = list(GKind)
    for i in range(ctx.sizes.oracle_cases):
        rng = ctx.rng('oracle', i)
        sample = _random_sample(rng, [2], range(1, 5))
        arc = version_space_arc(sample)
        cloud = sample_cone_cap(sample.cone(), 2000, ctx.child('oracle', i))
        theta = float(rng.uniform(0.0, 2.0 * np.pi))
        g = kinds[i % len(kinds)]
        estimate = psi_saa(UnitVector([np.cos(theta), np.sin(theta)]), cloud, g)
        if abs(estimate.scaled_value - psi_exact_2d(theta, arc, g)) >= 3.0 * estimate.scaled_std_error:
            misses += 1
    allowed = max(1, ctx.sizes.oracle_cases // 100)
    return misses <= allowed, {'cases': ctx.sizes.oracle_cases, 'outside_3se': misses, 'allowed': allowed}


def check_single_point_forcing(ctx: SuiteContext) -> Tuple[bool, Dict]:
    """One positive example e1 in R^3: the optimal output must be e1."""
    sample = LabeledSample(np.array([[1.0, 0.0, 0.0]]), np.array([1]))
    rule = LearningRule(kind=RuleKind.OPTIMAL, n_points=ctx.sizes.m1_points)
    output = apply_rule(rule, sample, ctx.child('m1'), threads=ctx.threads)
    distance = geodesic_distance(output, UnitVector.basis(3, 0))
    return distance <= 0.05, {'distance_to_e1': distance, 'n_points': ctx.sizes.m1_points}


def check_quadrant(ctx: SuiteContext) -> Tuple[bool, Dict]:
    """Quadrant of the plane: minimizer at pi/4, scaled psi near pi/32."""
    sample = LabeledSample(np.eye(2), np.array([1, 1]))
    cloud = sample_cone_cap(sample.cone(), ctx.sizes.quadrant_points, ctx.child('quadrant'))
    report = multistart_minimize(cloud, GKind.IDENTITY, 4, ctx.child('quadrant', 1), threads=ctx.threads)
    best = report.best.representative
    angle = float(np.mod(np.arctan2(best.coords[1], best.coords[0]), 2.0 * np.pi))
    estimate = psi_saa(best, cloud, GKind.IDENTITY)
    exact_angle, exact_value = argmin_exact_2d((0.0, np.pi / 2), GKind.IDENTITY)
    ok = (abs(angle - np.pi / 4) <= 0.01
          and abs(estimate.scaled_value - np.pi / 32) <= 3.0 * estimate.scaled_std_error
          and abs(exact_angle - np.pi / 4) <= 1e-6)
    return ok, {'angle': angle, 'scaled_psi': estimate.scaled_value, 'scaled_std_error': estimate.scaled_std_error,
                'exact_psi': exact_value, 'exact_angle': exact_angle, 'clusters': len(report.clusters)}


def check_mean_closed_form(ctx: SuiteContext) -> Tuple[bool, Dict]:
    """g = 2(1 - cos t): the minimizer is the normalized cloud mean."""
    worst = 0.0
    for i in range(ctx.sizes.mean_instances):
        rng = ctx.rng('mean', i)
        cone = _random_sample(rng, range(2, 6), range(1, 7)).cone()
        cloud = sample_cone_cap(cone, 2000, ctx.child('mean', i))
        start = sample_sphere(cone.dim, 1, rng)[0]
        result = minimize_from(start, cloud, GKind.TWO_ONE_MINUS_COS)
        target = UnitVector.from_vector(cloud.mean_direction())
        worst = max(worst, geodesic_distance(result.minimizer, target))
    return worst <= 1e-6, {'instances': ctx.sizes.mean_instances, 'max_distance': worst}


def check_minimum_location(ctx: SuiteContext) -> Tuple[bool, Dict]:
    """The best minimizer lies in K and in the conic hull of the normals."""
    failures = []
    worst_residual = 0.0
    for i in range(ctx.sizes.location_instances):
        rng = ctx.rng('location', i)
        cone = _random_sample(rng, range(2, 6), range(1, 7)).cone()
        cloud = sample_cone_cap(cone, ctx.sizes.location_points, ctx.child('location', i), antithetic=True)
        report = multistart_minimize(cloud, GKind.IDENTITY, 4, ctx.child('location', i, 1), threads=ctx.threads,
                                     initial=cloud.mean_direction())
        best = report.best.representative
        _, coefficients = project_dual(cone, best)
        worst_residual = max(worst_residual, coefficients.residual)
        if not (contains(cone, best, 1e-6) and coefficients.residual < 1e-4):
            failures.append(i)
    return not failures, {'instances': ctx.sizes.location_instances, 'failed': failures,
                          'max_dual_residual': worst_residual}


def check_uniqueness(ctx: SuiteContext) -> Tuple[bool, Dict]:
    """Multistart descent finds a single minimum on random version-space cones."""
    single = 0
    counts = []
    for i in range(ctx.sizes.unique_instances):
        rng = ctx.rng('uniqueness', i)
        cone = _random_sample(rng, range(2, 6), range(1, 7)).cone()
        cloud = sample_cone_cap(cone, ctx.sizes.unique_points, ctx.child('uniqueness', i), antithetic=True)
        report = multistart_minimize(cloud, GKind.IDENTITY, ctx.sizes.unique_starts,
                                     ctx.child('uniqueness', i, 1), threads=ctx.threads)
        counts.append(len(report.clusters))
        single += len(report.clusters) == 1
    rate = single / ctx.sizes.unique_instances
    return rate >= 0.98, {'instances': ctx.sizes.unique_instances, 'single_cluster': single,
                          'cluster_counts': counts}


def _exact_triple(rng: np.random.Generator, g: GKind, concave: bool) -> Optional[bool]:
    """Midpoint inequality on the circle with exact psi; None when no usable pair was drawn."""
    arc = version_space_arc(_random_sample(rng, [2], range(1, 5)))
    if arc is None:
        return None
    phi0, phi1 = arc
    # dual cone of an arc [phi0, phi1] is [phi1 - pi/2, phi0 + pi/2]
    low, high = phi1 - np.pi / 2, phi0 + np.pi / 2
    # half-circle arcs (one example) have a single dual ray
    if high - low < MIN_PAIR_SEPARATION:
        return None
    if concave:
        low, high = low + np.pi, high + np.pi
    for _ in range(20):
        t1, t2 = sorted(rng.uniform(low, high, size=2))
        if MIN_PAIR_SEPARATION <= t2 - t1 <= np.pi / 2:
            break
    else:
        return None
    middle = 0.5 * (t1 + t2)
    values = [psi_exact_2d(t, (phi0, phi1), g) for t in (t1, t2, middle)]
    gap = 0.5 * (values[0] + values[1]) - values[2]
    if concave:
        gap = -gap
    # identity is only strictly curved where the (antipodal) segment crosses the arc
    shift = np.pi if concave else 0.0
    overlap = min(t2 - shift, phi1) - max(t1 - shift, phi0)
    strict = g is GKind.SQUARE or overlap >= 1e-3
    return gap > 1e-12 if strict else gap > -1e-12


def _saa_triple(rng: np.random.Generator, g: GKind, concave: bool, n_points: int, seed: int) -> Optional[bool]:
    """Midpoint inequality at the SAA level in n >= 3: termwise sign plus a 2 SE margin."""
    cone = _random_sample(rng, range(3, 6), range(2, 7)).cone()
    cloud = sample_cone_cap(cone, n_points, seed)
    sign = -1.0 if concave else 1.0
    for _ in range(20):
        weights = rng.exponential(size=(2, cone.size))
        w1, w2 = (sign * (weights @ cone.normals))
        w1, w2 = UnitVector.from_vector(w1), UnitVector.from_vector(w2)
        if MIN_PAIR_SEPARATION <= geodesic_distance(w1, w2) <= np.pi / 2:
            break
    else:
        return None
    middle = geodesic_midpoint(w1, w2)
    gaps = 0.5 * (pointwise_values(w1, cloud, g) + pointwise_values(w2, cloud, g)) - pointwise_values(middle, cloud, g)
    gaps = sign * gaps
    margin = 2.0 * gaps.std(ddof=1) / np.sqrt(gaps.size)
    return bool(gaps.min() >= -1e-12 and gaps.mean() > margin)


def check_midpoints(ctx: SuiteContext) -> Tuple[bool, Dict]:
    """Strict midpoint convexity on the dual cap and concavity on its antipode."""
    cases = [(GKind.IDENTITY, False), (GKind.SQUARE, False), (GKind.IDENTITY, True)]
    tally = {}
    ok = True
    for c, (g, concave) in enumerate(cases):
        label = f"{g.value}_{'concave' if concave else 'convex'}"
        passed = skipped = 0
        for i in range(ctx.sizes.midpoint_triples):
            rng = ctx.rng('midpoint', c, i)
            if i % 2 == 0:
                verdict = _exact_triple(rng, g, concave)
            else:
                verdict = _saa_triple(rng, g, concave, ctx.sizes.midpoint_points, ctx.child('midpoint', c, i))
            if verdict is None:
                skipped += 1
            elif verdict:
                passed += 1
        failed = ctx.sizes.midpoint_triples - passed - skipped
        ok = ok and failed == 0
        tally[label] = {'passed': passed, 'failed': failed, 'skipped': skipped}
    return ok, tally


def check_disagreement(ctx: SuiteContext) -> Tuple[bool, Dict]:
    """Sign-disagreement rates on uniform test points equal rho(v, u)/pi."""
    n_test = 2 ** ctx.sizes.test_exponent
    worst = 0.0
    misses = 0
    for i in range(ctx.sizes.disagreement_pairs):
        rng = ctx.rng('disagreement', i)
        v, u = sample_sphere(3, 2, rng)
        p = misclass_prob(v, u)
        rate = empirical_disagreement(v, u, n_test, rng, method='sobol')
        bound = 3.0 * np.sqrt(p * (1.0 - p) / n_test)
        worst = max(worst, abs(rate - p) / bound if bound > 0 else 0.0)
        misses += abs(rate - p) > bound
    return misses == 0, {'pairs': ctx.sizes.disagreement_pairs, 'n_test': n_test,
                         'outside_3se': int(misses), 'max_gap_in_bounds': worst}


def check_equivariance(ctx: SuiteContext) -> Tuple[bool, Dict]:
    """Minimizing on a rotated cloud from a rotated start gives the rotated minimizer."""
    worst = 0.0
    for i in range(ctx.sizes.rotations):
        rng = ctx.rng('equivariance', i)
        cone = _random_sample(rng, [3], [5]).cone()
        cloud = sample_cone_cap(cone, ctx.sizes.rotation_points, ctx.child('equivariance', i))
        start = sample_sphere(3, 1, rng)[0]
        matrix = random_rotation(3, rng)
        base = minimize_from(start, cloud, GKind.IDENTITY)
        moved = minimize_from(matrix @ start, rotate_cloud(cloud, matrix), GKind.IDENTITY)
        worst = max(worst, geodesic_distance(rotate(matrix, base.minimizer), moved.minimizer))
    return worst <= 1e-6, {'rotations': ctx.sizes.rotations, 'max_distance': worst}


def check_omega_dominance(ctx: SuiteContext) -> Tuple[bool, Dict]:
    """Optimal rule's Omega is no worse than any baseline's, within 2 combined SE."""
    config = ExperimentConfig(n=3, m=5, trials=ctx.sizes.omega_trials, seed=ctx.child('omega'),
                              n_points=ctx.sizes.omega_points)
    report = run_experiment(config, threads=ctx.threads)
    optimal = report.row(RuleKind.OPTIMAL.value)
    ok = True
    rows = {}
    for row in report.rules:
        rows[row.name] = {'omega': row.omega, 'std_error': row.std_error, 'failures': row.failures}
        if row.name == optimal.name:
            continue
        combined = np.hypot(optimal.std_error, row.std_error)
        ok = ok and optimal.omega <= row.omega + 2.0 * combined
    return ok, {'trials': ctx.sizes.omega_trials, 'rules': rows}


def check_decomposition(ctx: SuiteContext) -> Tuple[bool, Dict]:
    """On the circle, the target-averaged and labeling-summed forms of Omega agree."""
    rule = LearningRule(kind=RuleKind.PERCEPTRON)
    seed = ctx.child('decomposition')
    direct = omega_estimate(rule, 2, 3, ctx.sizes.decomposition_trials, seed, threads=ctx.threads)
    summed = omega_decomposition_2d(rule, 3, ctx.sizes.decomposition_trials, seed, threads=ctx.threads)
    bound = 3.0 * np.hypot(direct.std_error, summed.std_error)
    return abs(direct.omega - summed.omega) <= bound, {'direct': direct.omega, 'summed': summed.omega,
                                                       'bound': float(bound)}


def check_determinism(ctx: SuiteContext) -> Tuple[bool, Dict]:
    """Sampling, multistart and Omega estimation do not depend on the worker count."""
    workers = DETERMINISM_WORKERS
    rng = ctx.rng('determinism')
    cone = _random_sample(rng, [3], [4]).cone()
    seed = ctx.child('determinism')

    serial = sample_cone_cap(cone, 3000, seed, threads=1)
    parallel = sample_cone_cap(cone, 3000, seed, threads=workers)
    same_cloud = bool(np.array_equal(serial.points, parallel.points) and serial.attempts == parallel.attempts)

    reports = [multistart_minimize(serial, GKind.IDENTITY, 4, seed, threads=k) for k in (1, workers)]
    same_minima = all(np.array_equal(a.minimizer.coords, b.minimizer.coords)
                      for a, b in zip(reports[0].results, reports[1].results))

    rule = LearningRule(kind=RuleKind.EUCLIDEAN_CENTROID, n_points=1000)
    estimates = [omega_estimate(rule, 3, 4, 6, seed, threads=k) for k in (1, workers)]
    same_omega = estimates[0] == estimates[1]
    return same_cloud and same_minima and same_omega, {'cloud': same_cloud, 'minima': same_minima,
                                                       'omega': same_omega}


CHECKS: List[Tuple[str, Callable[[SuiteContext], Tuple[bool, Dict]]]] = [
    ('separation_and_moreau', check_separation),
    ('gradient_finite_differences', check_gradient),
    ('circle_oracle_agreement', check_oracle),
    ('single_point_forcing', check_single_point_forcing),
    ('quadrant_oracle', check_quadrant),
    ('mean_closed_form', check_mean_closed_form),
    ('minimum_location', check_minimum_location),
    ('minimum_uniqueness', check_uniqueness),
    ('midpoint_inequalities', check_midpoints),
    ('disagreement_rate', check_disagreement),
    ('rotation_equivariance', check_equivariance),
    ('omega_dominance', check_omega_dominance),
    ('omega_decomposition', check_decomposition),
    ('worker_determinism', check_determinism),
]


def run_check(name: str, check: Callable[[SuiteContext], Tuple[bool, Dict]], ctx: SuiteContext) -> CheckResult:
    """Run one check; any error becomes a failed check with an error record."""
    started = time.perf_counter()
    try:
        passed, detail = check(ctx)
    except ConeCapError as e:
        logger.error(f"Check {name} raised {type(e).__name__}: {e.message}")
        passed, detail = False, e.to_record()
    except Exception as e:
        logger.exception(f"Check {name} crashed")
        passed, detail = False, {'error': type(e).__name__, 'message': str(e), 'details': {}}
    elapsed = time.perf_counter() - started
    logger.info(f"{name}: {'pass' if passed else 'FAIL'} ({elapsed:.1f}s)")
    return CheckResult(name=name, passed=bool(passed), detail=detail)


def run_suite(seed: int, full: bool = False, threads: int = 1,
              only: Optional[Sequence[str]] = None) -> Dict:
    """
    Run the invariant suite.

    Args:
        seed: Master seed
        full: Use acceptance sizes instead of the reduced defaults
        threads: Worker count; the output does not depend on it
        only: Optional subset of check names

    Returns:
        {'seed', 'full', 'checks': [{'name', 'pass', 'detail'}], 'passed'}
    """
    unknown = sorted(set(only or ()) - {name for name, _ in CHECKS})
    if unknown:
        raise InvalidInputError(f"unknown checks: {', '.join(unknown)}")
    ctx = SuiteContext(seed=seed, threads=threads, sizes=FULL if full else QUICK)
    selected = [(name, check) for name, check in CHECKS if only is None or name in only]
    results = [run_check(name, check, ctx).to_dict() for name, check in selected]
    passed = all(result['pass'] for result in results)
    logger.info(f"Verification {'passed' if passed else 'failed'}: "
                f"{sum(r['pass'] for r in results)}/{len(results)} checks")
    return {'seed': seed, 'full': full, 'checks': results, 'passed': passed}
