"""
Spherical Sampling - uniform points on S^{n-1} and on cone caps K ∩ S^{n-1}.

Cone caps are sampled by rejection from the uniform sphere measure, which
keeps the accepted points exactly uniform and yields an acceptance-rate
estimate of the cap's normalized measure.
"""

import logging
from dataclasses import dataclass, replace
from typing import List, Optional

import numpy as np
import pandas as pd

from cone_algebra import PolyhedralCone
from errors import InvalidInputError, LowAcceptanceError
from rng_streams import run_tasks, stream_label, substream

logger = logging.getLogger(__name__)

SAMPLING_BLOCK = 4096
MAX_ATTEMPTS_FACTOR = 10_000


@dataclass(frozen=True, eq=False)
class ConeCloud:
    """
    Fixed uniform sample of a cone cap (the SAA representation of sigma on K_1).

    Attributes:
        points: (N, n) array of unit vectors in K
        measure_estimate: accepted / attempts, estimates sigma(K_1)
        attempts: Number of uniform draws consumed
        accepted: Number of accepted draws (N, or N/2 for antithetic clouds)
        seed: Substream id the cloud was drawn from
        antithetic: Whether every point is paired with its mirror image
    """
    points: np.ndarray
    measure_estimate: float
    attempts: int
    accepted: int
    seed: str = ''
    antithetic: bool = False

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def measure_std_error(self) -> float:
        """Binomial standard error of measure_estimate."""
        if self.attempts == 0:
            return 0.0
        p = self.measure_estimate
        return float(np.sqrt(p * (1.0 - p) / self.attempts))

    def mean_direction(self) -> np.ndarray:
        """Euclidean mean of the cloud points."""
        return self.points.mean(axis=0)


def sample_sphere(n: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """
    Draw uniform points on S^{n-1} by normalizing Gaussian vectors.

    Args:
        n: Ambient dimension (>= 2)
        count: Number of points (>= 1)
        rng: Generator

    Returns:
        (count, n) array of unit rows
    """
    if n < 2:
        raise InvalidInputError(f"dimension must be >= 2, got {n}")
    if count < 1:
        raise InvalidInputError(f"count must be >= 1, got {count}")
    gaussian = rng.standard_normal((count, n))
    norms = np.linalg.norm(gaussian, axis=1, keepdims=True)
    # zero-norm draws have probability zero; redraw them anyway
    while np.any(norms == 0.0):
        bad = norms[:, 0] == 0.0
        gaussian[bad] = rng.standard_normal((int(bad.sum()), n))
        norms = np.linalg.norm(gaussian, axis=1, keepdims=True)
    return gaussian / norms


def _sample_block(dim: int, master_seed: int, stream: str, block: int) -> np.ndarray:
    """Uniform draws of block `block`; a pure function of its substream."""
    return sample_sphere(dim, SAMPLING_BLOCK, substream(master_seed, stream, block))


def _span_basis(normals: np.ndarray) -> Optional[np.ndarray]:
    """Orthonormal basis (columns) of span(normals); None when the span is all of R^n."""
    u, s, _ = np.linalg.svd(normals.T, full_matrices=False)
    rank = int(np.sum(s > 1e-10 * s[0]))
    if rank >= normals.shape[1]:
        return None
    return u[:, :rank]


def _mirror(points: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """Negate the component of every point orthogonal to the span of `basis`."""
    mirrored = 2.0 * (points @ basis) @ basis.T - points
    return mirrored / np.linalg.norm(mirrored, axis=1, keepdims=True)


def sample_cone_cap(cone: PolyhedralCone, count: int, master_seed: int,
                    max_attempts: Optional[int] = None, stream: str = 'cloud',
                    threads: int = 1, antithetic: bool = False) -> ConeCloud:
    """
    Rejection-sample `count` uniform points from K ∩ S^{n-1}.

    Draws come in fixed blocks, block b from substream (master_seed, stream, b),
    and are merged in block order, so the cloud does not depend on `threads`.

    Args:
        cone: The cone K
        count: Number of points N (>= 1)
        master_seed: Run seed
        max_attempts: Draw budget (default 10^4 * N)
        stream: Substream name
        threads: Worker count for block sampling
        antithetic: Pair every accepted draw with its mirror image through
            span(normals); the mirror is also uniform on the cap, and the
            cloud's objective becomes symmetric under that reflection

    Returns:
        ConeCloud with N points (N rounded up to even for antithetic clouds)

    Raises:
        LowAcceptanceError: if the budget runs out first
    """
    if count < 1:
        raise InvalidInputError(f"count must be >= 1, got {count}")
    if max_attempts is None:
        max_attempts = MAX_ATTEMPTS_FACTOR * count

    basis = _span_basis(cone.normals) if antithetic else None
    if antithetic and basis is None:
        logger.debug("Normals span R^n; antithetic mirroring is the identity, skipping it")
    mirror_needed = basis is not None
    target = (count + 1) // 2 if mirror_needed else count

    accepted_blocks: List[np.ndarray] = []
    accepted = 0
    attempts = 0
    block = 0
    batch = max(1, threads)
    while accepted < target:
        indices = list(range(block, block + batch))
        draws_list = run_tasks(lambda b: _sample_block(cone.dim, master_seed, stream, b), indices, threads)
        for draws in draws_list:
            if attempts >= max_attempts:
                break
            budget = min(SAMPLING_BLOCK, max_attempts - attempts)
            draws = draws[:budget]
            inside = np.flatnonzero(cone.margins(draws) >= 0.0)
            need = target - accepted
            if inside.size >= need:
                cut = inside[need - 1] + 1
                accepted_blocks.append(draws[inside[:need]])
                accepted += need
                attempts += int(cut)
                break
            accepted_blocks.append(draws[inside])
            accepted += int(inside.size)
            attempts += int(draws.shape[0])
        block += batch
        if accepted < target and attempts >= max_attempts:
            partial = np.vstack(accepted_blocks) if accepted_blocks else np.empty((0, cone.dim))
            estimate = accepted / attempts if attempts else 0.0
            logger.warning(f"Cone-cap sampling stopped after {attempts} draws "
                           f"with {accepted}/{target} accepted")
            raise LowAcceptanceError(
                f"acceptance too low: {accepted} of {target} points after {attempts} draws",
                partial_cloud=partial, measure_estimate=estimate, attempts=attempts)

    points = np.vstack(accepted_blocks)
    if mirror_needed:
        points = np.vstack([points, _mirror(points, basis)])

    cloud = ConeCloud(points=points, measure_estimate=accepted / attempts, attempts=attempts,
                      accepted=accepted, seed=stream_label(master_seed, stream),
                      antithetic=mirror_needed)
    logger.debug(f"Sampled {cloud.size} cap points from {attempts} draws "
                 f"(measure ≈ {cloud.measure_estimate:.4g})")
    return cloud


def rotate_cloud(cloud: ConeCloud, matrix: np.ndarray) -> ConeCloud:
    """Transport a cloud by an orthogonal map; the measure estimate is unchanged."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.shape != (cloud.dim, cloud.dim):
        raise InvalidInputError(f"rotation shape {matrix.shape} does not match dimension {cloud.dim}")
    return replace(cloud, points=cloud.points @ matrix.T)


def write_cloud_csv(cloud: ConeCloud, path: str) -> None:
    """
    Export a cloud: a `dim,n_points,measure_estimate` header line with its
    values, then one point per row.
    """
    summary = pd.DataFrame([{
        'dim': cloud.dim,
        'n_points': cloud.size,
        'measure_estimate': cloud.measure_estimate
    }])
    points = pd.DataFrame(cloud.points, columns=[f"x{i}" for i in range(cloud.dim)])
    with open(path, 'w', encoding='utf-8', newline='') as f:
        summary.to_csv(f, index=False, float_format='%.17g', lineterminator='\n')
        points.to_csv(f, index=False, float_format='%.17g', lineterminator='\n')
    logger.info(f"Cloud of {cloud.size} points exported to {path}")


def read_cloud_csv(path: str) -> ConeCloud:
    """Load a cloud written by write_cloud_csv."""
    summary = pd.read_csv(path, nrows=1)
    points = pd.read_csv(path, skiprows=2).to_numpy(dtype=float)
    n_points = int(summary['n_points'].iloc[0])
    if points.shape[0] != n_points:
        raise InvalidInputError(f"cloud file declares {n_points} points but holds {points.shape[0]}")
    estimate = float(summary['measure_estimate'].iloc[0])
    return ConeCloud(points=points, measure_estimate=estimate,
                     attempts=int(round(n_points / estimate)) if estimate > 0 else 0,
                     accepted=n_points, seed=f"file:{path}")

