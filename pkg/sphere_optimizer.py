"""
Sphere Optimizer - retracted gradient descent on S^{n-1} for the SAA objective.

Each iteration steps along the negative Riemannian gradient, maps back to
the sphere by normalization and backtracks until the Armijo condition holds.
A multistart driver clusters the local minima it reaches so uniqueness of
the global minimum can be observed directly.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from errors import InvalidInputError, NumericalFailureError
from psi_objective import GKind, pointwise_values, psi_grad_saa, psi_saa
from rng_streams import run_tasks, substream
from sphere_core import UnitVector, VectorLike, as_unit, geodesic_distance
from spherical_sampling import ConeCloud, sample_sphere

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OptOptions:
    """
    Descent settings.

    Attributes:
        max_iters: Iteration cap (>= 1)
        tol: Gradient-norm threshold for convergence
        clamp: Gradient drop threshold passed to psi_grad_saa
        initial_step: First trial step of every line search
        sufficient_decrease: Armijo parameter c1
        contraction: Backtracking factor
        min_step: Steps below this count as a stall
        keep_trace: Record (iteration, psi, grad_norm) per iteration
    """
    max_iters: int = 1000
    tol: float = 1e-8
    clamp: float = 1e-9
    initial_step: float = 1.0
    sufficient_decrease: float = 1e-4
    contraction: float = 0.5
    min_step: float = 1e-14
    keep_trace: bool = False

    def validate(self) -> None:
        if self.max_iters < 1:
            raise InvalidInputError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.tol <= 0:
            raise InvalidInputError(f"tol must be > 0, got {self.tol}")
        if not 0.0 < self.contraction < 1.0:
            raise InvalidInputError(f"contraction must lie in (0, 1), got {self.contraction}")
        if not 0.0 < self.sufficient_decrease < 1.0:
            raise InvalidInputError(f"sufficient_decrease must lie in (0, 1), got {self.sufficient_decrease}")


@dataclass(frozen=True)
class OptResult:
    """Outcome of one descent run; `stalled` marks runs ended by a vanishing step."""
    minimizer: UnitVector
    psi_value: float
    iterations: int
    grad_norm: float
    converged: bool
    stalled: bool = False
    trace: Optional[List[Tuple[int, float, float]]] = None

    @property
    def settled(self) -> bool:
        """Converged or stalled: the run stopped at a numerical minimum."""
        return self.converged or self.stalled


@dataclass(frozen=True)
class MinimumCluster:
    representative: UnitVector
    psi_value: float
    multiplicity: int
    members: Tuple[int, ...] = ()


@dataclass(frozen=True)
class MinimaReport:
    """
    Distinct minima found by a multistart run, sorted by psi value.

    Attributes:
        clusters: Minima merged within the cluster radius
        starts: Number of descent runs
        unsettled: Runs that hit max_iters before converging or stalling
        results: Individual run results in start order
    """
    clusters: List[MinimumCluster]
    starts: int
    unsettled: int = 0
    results: List[OptResult] = field(default_factory=list)

    @property
    def best(self) -> MinimumCluster:
        return self.clusters[0]


def minimize_from(start: VectorLike, cloud: ConeCloud, g: GKind,
                  opts: Optional[OptOptions] = None) -> OptResult:
    """
    Retracted gradient descent with Armijo backtracking from one start.

    Args:
        start: Initial point on the sphere
        cloud: Fixed cone-cap sample defining the objective
        g: Integrand shape
        opts: Descent settings

    Returns:
        OptResult; converged implies grad_norm < opts.tol
    """
    opts = opts or OptOptions()
    opts.validate()
    if cloud.size == 0:
        raise InvalidInputError("cannot optimize over an empty cloud")

    w = as_unit(start).coords
    if w.size != cloud.dim:
        raise InvalidInputError(f"start has dimension {w.size}, cloud has {cloud.dim}")

    value = psi_saa(w, cloud, g).value
    trace: List[Tuple[int, float, float]] = []
    converged = stalled = False
    grad_norm = np.inf
    iteration = 0

    for iteration in range(opts.max_iters):
        gradient = psi_grad_saa(w, cloud, g, opts.clamp)
        grad_norm = gradient.norm
        if opts.keep_trace:
            trace.append((iteration, value, grad_norm))
        if grad_norm < opts.tol:
            converged = True
            break

        current = pointwise_values(w, cloud, g)
        threshold = -opts.sufficient_decrease * grad_norm ** 2
        step = opts.initial_step
        while True:
            candidate = w - step * gradient.vector
            candidate /= np.linalg.norm(candidate)
            # termwise difference resolves decreases below the rounding unit of psi
            change = float(np.mean(pointwise_values(candidate, cloud, g) - current))
            if change < 0.0 and change <= threshold * step:
                break
            step *= opts.contraction
            if step < opts.min_step:
                stalled = True
                break
        if stalled:
            logger.debug(f"Line search stalled at iteration {iteration} (grad norm {grad_norm:.3e})")
            break

        w = candidate
        value += change
    else:
        iteration = opts.max_iters
        logger.warning(f"Descent hit max_iters={opts.max_iters} with grad norm {grad_norm:.3e}")

    minimizer = UnitVector(w)
    return OptResult(
        minimizer=minimizer,
        psi_value=psi_saa(minimizer, cloud, g).value,
        iterations=iteration,
        grad_norm=float(grad_norm),
        converged=converged,
        stalled=stalled,
        trace=trace if opts.keep_trace else None
    )


def cluster_minima(results: List[OptResult], cluster_radius: float) -> List[MinimumCluster]:
    """
    Greedy clustering in start order: a settled minimizer joins the first
    cluster whose representative lies within cluster_radius, otherwise it
    founds a new one.
    """
    groups: List[List[int]] = []
    for index, result in enumerate(results):
        if not result.settled:
            continue
        for group in groups:
            if geodesic_distance(results[group[0]].minimizer, result.minimizer) <= cluster_radius:
                group.append(index)
                break
        else:
            groups.append([index])

    clusters = [MinimumCluster(representative=results[group[0]].minimizer,
                               psi_value=results[group[0]].psi_value,
                               multiplicity=len(group),
                               members=tuple(group)) for group in groups]
    return sorted(clusters, key=lambda cluster: cluster.psi_value)


def multistart_minimize(cloud: ConeCloud, g: GKind, n_starts: int, seed: int,
                        cluster_radius: float = 1e-3, opts: Optional[OptOptions] = None,
                        threads: int = 1, initial: Optional[VectorLike] = None) -> MinimaReport:
    """
    Run minimize_from from several starts and cluster the minimizers.

    Start i is drawn uniformly from substream (seed, 'starts', i); when
    `initial` is given it replaces start 0.

    Args:
        cloud: Fixed cone-cap sample
        g: Integrand shape
        n_starts: Number of starts (>= 2)
        seed: Master seed
        cluster_radius: Geodesic merge radius
        opts: Descent settings
        threads: Worker count; the report does not depend on it
        initial: Optional deterministic first start (any nonzero vector; it is normalized)

    Returns:
        MinimaReport with clusters sorted by psi value
    """
    if n_starts < 2:
        raise InvalidInputError(f"n_starts must be >= 2, got {n_starts}")
    if cluster_radius <= 0:
        raise InvalidInputError(f"cluster_radius must be > 0, got {cluster_radius}")

    starts = [sample_sphere(cloud.dim, 1, substream(seed, 'starts', i))[0] for i in range(n_starts)]
    if initial is not None:
        starts[0] = UnitVector.from_vector(initial).coords

    results = run_tasks(lambda s: minimize_from(s, cloud, g, opts), starts, threads)
    unsettled = sum(1 for result in results if not result.settled)
    if unsettled:
        logger.warning(f"{unsettled} of {n_starts} descent runs did not settle")

    clusters = cluster_minima(results, cluster_radius)
    if not clusters:
        best = min(results, key=lambda result: result.psi_value)
        raise NumericalFailureError("no descent run settled; raise max_iters",
                                    best_iterate=best.minimizer.coords, starts=n_starts)
    logger.debug(f"Multistart found {len(clusters)} cluster(s) from {n_starts} starts")
    return MinimaReport(clusters=clusters, starts=n_starts, unsettled=unsettled, results=results)


def write_trace_csv(result: OptResult, path: str) -> None:
    """Export a run's trace as CSV with columns iter, psi, grad_norm."""
    if result.trace is None:
        raise InvalidInputError("run was made without keep_trace")
    df = pd.DataFrame(result.trace, columns=['iter', 'psi', 'grad_norm'])
    df.to_csv(path, index=False, float_format='%.17g', lineterminator='\n')
    logger.info(f"Descent trace with {len(df)} rows exported to {path}")
