"""
Halfspace Lab - learning a homogeneous halfspace from a uniformly labeled sample.

A target u and sample x are drawn uniformly from the sphere, labeled by
sign<u, x_i>, and handed to a learning rule. The rule's penalty is the
misclassification probability rho(h, u)/pi on a fresh uniform test point;
Omega(f) is its expectation over targets and samples.
"""

import itertools
import logging
import warnings
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.stats import norm, qmc
from sklearn.exceptions import ConvergenceWarning
from sklearn.linear_model import Perceptron

from cone_algebra import PolyhedralCone, contains, from_labeled_sample, interior_margin
from errors import InvalidInputError, LowAcceptanceError, NonConvergenceError, NumericalFailureError
from psi_objective import GKind, psi_exact_2d
from rng_streams import child_seed, run_tasks, substream
from sphere_core import UnitVector, VectorLike, as_array, as_unit, geodesic_distance
from sphere_optimizer import OptOptions, multistart_minimize
from spherical_sampling import ConeCloud, sample_cone_cap, sample_sphere

logger = logging.getLogger(__name__)

CLOUD_RETRIES = 3
OUTPUT_TOLERANCE = 1e-6
PERCEPTRON_EPOCH_LIMIT = 10 ** 7


@dataclass(frozen=True, eq=False)
class LabeledSample:
    """m unit points x_i (rows) with labels y_i in {-1, +1}."""
    points: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        points = np.atleast_2d(np.asarray(self.points, dtype=float))
        labels = np.asarray(self.labels).reshape(-1).astype(int)
        if points.shape[0] != labels.size:
            raise InvalidInputError(f"{points.shape[0]} points but {labels.size} labels")
        if not np.all(np.isin(labels, (-1, 1))):
            raise InvalidInputError("labels must be -1 or +1")
        object.__setattr__(self, 'points', points)
        object.__setattr__(self, 'labels', labels)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def cone(self) -> PolyhedralCone:
        """Version-space cone K(x, y)."""
        return from_labeled_sample(list(self.points), self.labels)

    def rotated(self, matrix: np.ndarray) -> 'LabeledSample':
        return LabeledSample(self.points @ np.asarray(matrix).T, self.labels)


def label_points(u: VectorLike, points) -> np.ndarray:
    """
    Labels y_i = sign<u, x_i>, with sign(0) = +1.

    Args:
        u: Target direction
        points: (m, n) array of sample points

    Returns:
        Integer array of -1/+1 labels
    """
    inner = np.atleast_2d(np.asarray(points, dtype=float)) @ as_array(u)
    return np.where(inner >= 0.0, 1, -1)


def random_instance(n: int, m: int, rng: np.random.Generator) -> Tuple[UnitVector, LabeledSample]:
    """Draw a uniform target u and m uniform points labeled by u."""
    if m < 1:
        raise InvalidInputError(f"sample size must be >= 1, got {m}")
    target = UnitVector(sample_sphere(n, 1, rng)[0])
    points = sample_sphere(n, m, rng)
    return target, LabeledSample(points, label_points(target, points))


def misclass_prob(v: VectorLike, u: VectorLike) -> float:
    """Probability that sign<v, x> != sign<u, x> for uniform x: rho(v, u)/pi."""
    return geodesic_distance(v, u) / np.pi


def empirical_disagreement(v: VectorLike, u: VectorLike, n_test: int,
                           rng: np.random.Generator, method: str = 'iid') -> float:
    """
    Fraction of uniform test points on which v and u predict different signs.

    Args:
        v: Hypothesis
        u: Target
        n_test: Number of test points
        rng: Generator
        method: 'iid' for independent draws, 'sobol' for a scrambled Sobol
            sequence pushed through the Gaussian quantile (lower variance)

    Returns:
        Disagreement rate in [0, 1]; the game's average reward is 1 - 2 * rate
    """
    v, u = as_unit(v), as_unit(u)
    if n_test < 1:
        raise InvalidInputError(f"n_test must be >= 1, got {n_test}")
    if method == 'iid':
        tests = sample_sphere(v.dim, n_test, rng)
    elif method == 'sobol':
        sampler = qmc.Sobol(d=v.dim, scramble=True, seed=rng)
        exponent = int(np.log2(n_test))
        with warnings.catch_warnings():
            # non-power-of-two sizes lose balance but stay valid
            warnings.simplefilter('ignore', UserWarning)
            uniform = sampler.random_base2(exponent) if 2 ** exponent == n_test else sampler.random(n_test)
        tests = norm.ppf(np.clip(uniform, 1e-16, 1.0 - 1e-16))
    else:
        raise InvalidInputError(f"unknown test-point method '{method}'")
    return float(np.mean(label_points(v, tests) != label_points(u, tests)))


class RuleKind(Enum):
    OPTIMAL = 'optimal'
    EUCLIDEAN_CENTROID = 'euclidean_centroid'
    SPHERICAL_CENTROID = 'spherical_centroid'
    PERCEPTRON = 'perceptron'

    @classmethod
    def parse(cls, value: Union[str, 'RuleKind']) -> 'RuleKind':
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            choices = ', '.join(kind.value for kind in cls)
            raise InvalidInputError(f"unknown learning rule '{value}' (choose from {choices})")

    @property
    def uses_cloud(self) -> bool:
        return self is not RuleKind.PERCEPTRON


@dataclass(frozen=True)
class LearningRule:
    """
    A learning rule and its parameters.

    Attributes:
        kind: Which rule
        n_points: Cone-cap cloud size for the cloud-based rules
        epoch_cap: Perceptron passes before a thin sample is refit with its mistake bound
        n_starts: Descent starts for Optimal / SphericalCentroid
        antithetic: Mirror the cloud through span(normals)
        opts: Descent settings
    """
    kind: RuleKind
    n_points: int = 20000
    epoch_cap: int = 1000
    n_starts: int = 2
    antithetic: bool = True
    opts: OptOptions = field(default_factory=OptOptions)

    @property
    def name(self) -> str:
        return self.kind.value

    @property
    def g(self) -> Optional[GKind]:
        if self.kind is RuleKind.OPTIMAL:
            return GKind.IDENTITY
        if self.kind is RuleKind.SPHERICAL_CENTROID:
            return GKind.SQUARE
        return None


OracleRule = Callable[[LabeledSample, int, UnitVector], VectorLike]
RuleLike = Union[LearningRule, OracleRule]


def _rule_name(rule: RuleLike) -> str:
    if isinstance(rule, LearningRule):
        return rule.name
    return getattr(rule, '__name__', 'custom')


def _perceptron_weights(features: np.ndarray, targets: np.ndarray, epochs: int) -> np.ndarray:
    clf = Perceptron(fit_intercept=False, shuffle=False, eta0=1.0, penalty=None, max_iter=epochs, tol=None)
    with warnings.catch_warnings():
        warnings.simplefilter('ignore', ConvergenceWarning)
        clf.fit(features, targets)
    return clf.coef_[0]


def mistake_bound_epochs(sample: LabeledSample) -> Optional[int]:
    """
    Passes after which the perceptron is consistent on a separable sample:
    (R / gamma)^2 + 1 for radius R and maximin margin gamma. None when no
    positive margin is found.
    """
    _, gamma = interior_margin(sample.cone())
    if gamma <= 1e-12:
        return None
    norms = np.linalg.norm(sample.points, axis=1)
    ratio = norms.max() / (gamma * norms.min())
    return int(min(PERCEPTRON_EPOCH_LIMIT, np.ceil(ratio ** 2) + 1))


def _train_perceptron(sample: LabeledSample, epoch_cap: int) -> UnitVector:
    """
    Mistake-driven updates w <- w + y_i x_i, one pass per epoch, until every
    training point is strictly on its side.

    Thin version spaces need more than epoch_cap passes; those samples are
    refit with the mistake-bound pass count.
    """
    normals = sample.labels[:, None] * sample.points
    # mirrored copies give the classifier both classes
    features = np.vstack([normals, -normals])
    targets = np.concatenate([np.ones(sample.size, dtype=int), -np.ones(sample.size, dtype=int)])

    epochs = epoch_cap
    weights = _perceptron_weights(features, targets, epochs)
    if not np.all(normals @ weights > 0.0):
        bound = mistake_bound_epochs(sample)
        if bound is not None and bound > epoch_cap:
            logger.debug(f"Perceptron refit with {bound} epochs")
            epochs = bound
            weights = _perceptron_weights(features, targets, epochs)
    if np.all(normals @ weights > 0.0):
        return UnitVector.from_vector(weights)
    raise NonConvergenceError(f"perceptron not consistent after {epochs} epochs",
                              best_iterate=np.array(weights), epoch_cap=epochs)


def rule_cloud(rule: LearningRule, sample: LabeledSample, seed: int) -> ConeCloud:
    """The cone-cap cloud a cloud-based rule optimizes over."""
    return sample_cone_cap(sample.cone(), rule.n_points, seed, stream='rule-cloud',
                           antithetic=rule.antithetic)


def apply_rule(rule: LearningRule, sample: LabeledSample, seed: int,
               cloud: Optional[ConeCloud] = None, threads: int = 1) -> UnitVector:
    """
    Output hypothesis of a learning rule on one labeled sample.

    Args:
        rule: The rule
        sample: Consistent labeled sample
        seed: Master seed of this application
        cloud: Prebuilt cone-cap cloud, shared across rules of one trial
        threads: Worker count for multistart descent

    Returns:
        Unit hypothesis h

    Raises:
        LowAcceptanceError: if the cone cap cannot be sampled
        NonConvergenceError: if the perceptron hits its epoch cap
    """
    if rule.kind is RuleKind.PERCEPTRON:
        return _train_perceptron(sample, rule.epoch_cap)

    if cloud is None:
        cloud = rule_cloud(rule, sample, seed)
    mean = cloud.mean_direction()
    if rule.kind is RuleKind.EUCLIDEAN_CENTROID:
        return UnitVector.from_vector(mean)

    initial = mean if np.linalg.norm(mean) > 0 else None
    report = multistart_minimize(cloud, rule.g, rule.n_starts, seed, opts=rule.opts,
                                 threads=threads, initial=initial)
    if len(report.clusters) > 1:
        logger.debug(f"{rule.name}: {len(report.clusters)} minima clusters; taking the lowest")
    hypothesis = report.best.representative
    if not contains(sample.cone(), hypothesis, OUTPUT_TOLERANCE):
        logger.warning(f"{rule.name} output lies outside the version space")
    return hypothesis


@dataclass(frozen=True)
class OmegaEstimate:
    """
    Monte Carlo estimate of Omega for one rule.

    Attributes:
        omega: Mean of rho(h, u)/pi over successful trials
        std_error: Sample standard deviation / sqrt(trials)
        trials: Successful trials
        failures: Trials dropped after sampling or training errors
        retries: Cloud resampling attempts beyond the first
        consistent: Trials whose output agreed with every sample label
    """
    omega: float
    std_error: float
    trials: int
    failures: int = 0
    retries: int = 0
    consistent: int = 0


@dataclass
class _TrialOutcome:
    errors: Dict[str, Optional[float]]
    consistent: Dict[str, bool]
    retries: int = 0


def _needs_cloud(rule: RuleLike) -> bool:
    return isinstance(rule, LearningRule) and rule.kind.uses_cloud


def _build_cloud(rules: Sequence[RuleLike], sample: LabeledSample, seed: int,
                 trial: int) -> Tuple[Optional[ConeCloud], int]:
    """Shared cloud for one trial, resampled on fresh substreams when acceptance is too low."""
    cloud_rules = [rule for rule in rules if _needs_cloud(rule)]
    if not cloud_rules:
        return None, 0
    n_points = max(rule.n_points for rule in cloud_rules)
    antithetic = any(rule.antithetic for rule in cloud_rules)
    cone = sample.cone()
    for attempt in range(CLOUD_RETRIES + 1):
        try:
            cloud = sample_cone_cap(cone, n_points, child_seed(seed, 'rule-cloud', trial, attempt),
                                    antithetic=antithetic)
            return cloud, attempt
        except LowAcceptanceError as e:
            logger.warning(f"Trial {trial}: cloud attempt {attempt} failed ({e.message})")
    raise LowAcceptanceError(f"trial {trial}: cone cap not sampled after {CLOUD_RETRIES + 1} attempts",
                             trial=trial)


def _evaluate_trial(rules: Sequence[RuleLike], n: int, m: int, seed: int, trial: int) -> _TrialOutcome:
    """Draw instance `trial` and score every rule on it with one shared cloud."""
    target, sample = random_instance(n, m, substream(seed, 'instance', trial))
    names = [_rule_name(rule) for rule in rules]
    outcome = _TrialOutcome(errors={name: None for name in names},
                            consistent={name: False for name in names})
    cloud_failed = False
    try:
        cloud, outcome.retries = _build_cloud(rules, sample, seed, trial)
    except LowAcceptanceError as e:
        logger.error(f"Trial {trial} skipped for cloud-based rules: {e.message}")
        cloud, outcome.retries, cloud_failed = None, CLOUD_RETRIES, True

    rule_seed = child_seed(seed, 'rule', trial)
    for rule, name in zip(rules, names):
        if cloud_failed and _needs_cloud(rule):
            continue
        try:
            if isinstance(rule, LearningRule):
                hypothesis = apply_rule(rule, sample, rule_seed, cloud=cloud)
            else:
                hypothesis = as_unit(rule(sample, rule_seed, target))
        except NumericalFailureError as e:
            logger.error(f"Trial {trial}: rule {name} failed: {e.message}")
            continue
        outcome.errors[name] = misclass_prob(hypothesis, target)
        outcome.consistent[name] = bool(np.all(label_points(hypothesis, sample.points) == sample.labels))
    return outcome


def _summarize(values: List[float], failures: int, retries: int, consistent: int) -> OmegaEstimate:
    trials = len(values)
    if trials == 0:
        return OmegaEstimate(omega=float('nan'), std_error=float('nan'), trials=0,
                             failures=failures, retries=retries, consistent=0)
    array = np.asarray(values)
    std_error = float(array.std(ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0
    return OmegaEstimate(omega=float(array.mean()), std_error=std_error, trials=trials,
                         failures=failures, retries=retries, consistent=consistent)


def omega_estimate(rule: RuleLike, n: int, m: int, trials: int, seed: int,
                   threads: int = 1) -> OmegaEstimate:
    """
    Monte Carlo estimate of Omega(f) = E_u E_x rho(f(x, u(x)), u) / pi.

    Trial t draws its instance from substream (seed, 'instance', t), so the
    instance sequence is shared by every rule estimated with the same seed.

    Args:
        rule: A LearningRule, or a callable (sample, seed, target) -> vector
        n: Dimension
        m: Sample size
        trials: Number of trials (>= 1)
        seed: Master seed
        threads: Worker count; the estimate does not depend on it

    Returns:
        OmegaEstimate
    """
    if trials < 1:
        raise InvalidInputError(f"trials must be >= 1, got {trials}")
    outcomes = run_tasks(lambda t: _evaluate_trial([rule], n, m, seed, t), range(trials), threads)
    name = _rule_name(rule)
    values = [o.errors[name] for o in outcomes if o.errors[name] is not None]
    return _summarize(values, failures=trials - len(values),
                      retries=sum(o.retries for o in outcomes),
                      consistent=sum(o.consistent[name] for o in outcomes))


@dataclass(frozen=True)
class ExperimentConfig:
    """Parameters of an Omega comparison run."""
    rules: Tuple[str, ...] = ('optimal', 'euclidean_centroid', 'spherical_centroid', 'perceptron')
    n: int = 3
    m: int = 5
    trials: int = 500
    seed: int = 0
    n_points: int = 20000
    n_starts: int = 2
    epoch_cap: int = 1000
    antithetic: bool = True
    opts: OptOptions = field(default_factory=OptOptions)

    def learning_rules(self) -> List[LearningRule]:
        return [LearningRule(kind=RuleKind.parse(name), n_points=self.n_points, epoch_cap=self.epoch_cap,
                             n_starts=self.n_starts, antithetic=self.antithetic, opts=self.opts)
                for name in self.rules]

    def to_dict(self) -> Dict:
        record = asdict(self)
        record['rules'] = list(self.rules)
        return record


@dataclass(frozen=True)
class RuleRow:
    name: str
    omega: float
    std_error: float
    trials: int
    failures: int
    retries: int
    consistent: int
    delta_vs_optimal: Optional[float] = None
    delta_std_error: Optional[float] = None


@dataclass(frozen=True)
class ExperimentReport:
    """Per-rule Omega estimates over one shared instance stream."""
    config: Dict
    rules: List[RuleRow]
    seed: int

    def row(self, name: str) -> RuleRow:
        for row in self.rules:
            if row.name == name:
                return row
        raise KeyError(name)

    def to_dict(self) -> Dict:
        return {'config': self.config, 'rules': [asdict(row) for row in self.rules], 'seed': self.seed}


def _paired_delta(optimal: List[Optional[float]], other: List[Optional[float]]) -> Tuple[Optional[float], Optional[float]]:
    """Mean and standard error of omega(optimal) - omega(other) over trials both completed."""
    pairs = [(a, b) for a, b in zip(optimal, other) if a is not None and b is not None]
    if len(pairs) < 2:
        return None, None
    diffs = np.array([a - b for a, b in pairs])
    return float(diffs.mean()), float(diffs.std(ddof=1) / np.sqrt(diffs.size))


def run_experiment(config: ExperimentConfig, threads: int = 1) -> ExperimentReport:
    """
    Estimate Omega for every configured rule on the same (u, x) instances.

    Args:
        config: Experiment parameters
        threads: Worker count; the report does not depend on it

    Returns:
        ExperimentReport, one row per rule in config order
    """
    if config.trials < 1:
        raise InvalidInputError(f"trials must be >= 1, got {config.trials}")
    if not config.rules:
        raise InvalidInputError("experiment needs at least one rule")
    rules = config.learning_rules()
    names = [rule.name for rule in rules]
    if len(set(names)) != len(names):
        raise InvalidInputError(f"duplicate rules in {names}")

    logger.info(f"Running {config.trials} trials of {', '.join(names)} (n={config.n}, m={config.m})")
    outcomes = run_tasks(lambda t: _evaluate_trial(rules, config.n, config.m, config.seed, t),
                         range(config.trials), threads)

    optimal_name = RuleKind.OPTIMAL.value
    per_rule = {name: [o.errors[name] for o in outcomes] for name in names}
    retries = sum(o.retries for o in outcomes)
    rows = []
    for rule, name in zip(rules, names):
        values = [v for v in per_rule[name] if v is not None]
        estimate = _summarize(values, failures=config.trials - len(values),
                              retries=retries if rule.kind.uses_cloud else 0,
                              consistent=sum(o.consistent[name] for o in outcomes))
        delta = delta_se = None
        if optimal_name in per_rule and name != optimal_name:
            delta, delta_se = _paired_delta(per_rule[optimal_name], per_rule[name])
        rows.append(RuleRow(name=name, omega=estimate.omega, std_error=estimate.std_error,
                            trials=estimate.trials, failures=estimate.failures, retries=estimate.retries,
                            consistent=estimate.consistent, delta_vs_optimal=delta,
                            delta_std_error=delta_se))
        logger.info(f"{name}: omega = {estimate.omega:.5f} ± {estimate.std_error:.5f} "
                    f"({estimate.failures} failed)")

    return ExperimentReport(config=config.to_dict(), rules=rows, seed=config.seed)


def version_space_arc(sample: LabeledSample) -> Optional[Tuple[float, float]]:
    """
    Version space of a sample on the circle as an angular interval.

    Each constraint cos(phi - alpha_i) >= 0 keeps a closed half-circle, so
    the intersection is one arc whose endpoints are among alpha_i ± pi/2.

    Returns:
        (phi0, phi1) with phi0 in [0, 2pi) and phi0 < phi1 <= phi0 + pi, or
        None when the version space has empty interior
    """
    if sample.dim != 2:
        raise InvalidInputError(f"version-space arcs need n = 2, got n = {sample.dim}")
    normals = sample.labels[:, None] * sample.points
    alphas = np.arctan2(normals[:, 1], normals[:, 0])

    def margin(phi: float) -> float:
        return float(np.min(normals @ np.array([np.cos(phi), np.sin(phi)])))

    candidates = np.mod(np.concatenate([alphas - np.pi / 2, alphas + np.pi / 2]), 2.0 * np.pi)
    feasible = sorted(phi for phi in candidates if margin(phi) >= -1e-12)
    for start, end in itertools.permutations(feasible, 2):
        length = np.mod(end - start, 2.0 * np.pi)
        if length <= 1e-12 or length > np.pi + 1e-12:
            continue
        if margin(start + length / 2.0) > 0.0:
            return float(start), float(start + length)
    return None


def omega_decomposition_2d(rule: RuleLike, m: int, trials: int, seed: int,
                           threads: int = 1) -> OmegaEstimate:
    """
    Omega on the circle by summing over labelings instead of targets.

    For each drawn sample x, every label vector y with a nonempty version
    space contributes the exact integral of rho(f(x, y), u)/pi over that arc.
    Oracle rules receive the arc midpoint as their target argument.

    Args:
        rule: A LearningRule or a callable (sample, seed, target) -> vector
        m: Sample size
        trials: Number of drawn samples (>= 1)
        seed: Master seed

    Returns:
        OmegaEstimate over all samples; `failures` counts labelings whose
        rule failed, and their arcs add nothing to the sample's sum
    """
    if trials < 1:
        raise InvalidInputError(f"trials must be >= 1, got {trials}")
    if m < 1:
        raise InvalidInputError(f"sample size must be >= 1, got {m}")

    def one_sample(trial: int) -> Tuple[float, int]:
        points = sample_sphere(2, m, substream(seed, 'decomposition', trial))
        total = 0.0
        failed = 0
        for index, signs in enumerate(itertools.product((1, -1), repeat=m)):
            sample = LabeledSample(points, np.array(signs))
            arc = version_space_arc(sample)
            if arc is None:
                continue
            rule_seed = child_seed(seed, 'decomposition-rule', trial, index)
            middle = 0.5 * (arc[0] + arc[1])
            try:
                if isinstance(rule, LearningRule):
                    hypothesis = apply_rule(rule, sample, rule_seed)
                else:
                    hypothesis = as_unit(rule(sample, rule_seed, UnitVector([np.cos(middle), np.sin(middle)])))
            except NumericalFailureError as e:
                logger.error(f"Sample {trial}, labeling {signs} (arc length {arc[1] - arc[0]:.3e}): {e.message}")
                failed += 1
                continue
            theta = float(np.arctan2(hypothesis.coords[1], hypothesis.coords[0]))
            total += psi_exact_2d(theta, arc, GKind.IDENTITY) / np.pi
        return total, failed

    results = run_tasks(one_sample, range(trials), threads)
    return _summarize([total for total, _ in results], failures=sum(failed for _, failed in results),
                      retries=0, consistent=0)
