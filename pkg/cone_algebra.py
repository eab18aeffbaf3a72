"""
Cone Algebra - polyhedral cones K = {v : <v, a_i> >= 0} and their duals.

The dual cone of K is the conic hull of the normals a_i. Projections onto
the dual come from nonnegative least squares; projections onto K follow
from the Moreau decomposition P_K(w) = w + P_dual(-w).
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linprog, lsq_linear, nnls

from errors import InvalidInputError, NumericalFailureError, PreconditionError
from sphere_core import UnitVector, VectorLike, as_array, as_unit

logger = logging.getLogger(__name__)

DUPLICATE_TOLERANCE = 1e-12
MEMBERSHIP_TOLERANCE = 1e-9


@dataclass(frozen=True, eq=False)
class PolyhedralCone:
    """
    Closed convex cone given by unit halfspace normals (rows of `normals`).

    Near-duplicate normals are merged on construction.
    """
    normals: np.ndarray

    def __post_init__(self):
        normals = np.array(self.normals, dtype=float)
        if normals.ndim != 2 or normals.shape[0] < 1:
            raise InvalidInputError("a cone needs at least one normal")
        if normals.shape[1] < 2:
            raise InvalidInputError(f"cone dimension must be >= 2, got {normals.shape[1]}")
        norms = np.linalg.norm(normals, axis=1)
        if np.any(norms == 0.0) or not np.all(np.isfinite(norms)):
            raise InvalidInputError("cone normals must be finite and nonzero")
        normals = normals / norms[:, None]

        kept = []
        for row in normals:
            if not any(np.dot(row, other) > 1.0 - DUPLICATE_TOLERANCE for other in kept):
                kept.append(row)
        if len(kept) < len(normals):
            logger.debug(f"Merged {len(normals) - len(kept)} duplicate cone normals")
        normals = np.vstack(kept)
        normals.setflags(write=False)
        object.__setattr__(self, 'normals', normals)

    @property
    def dim(self) -> int:
        return self.normals.shape[1]

    @property
    def size(self) -> int:
        return self.normals.shape[0]

    def margins(self, points: np.ndarray) -> np.ndarray:
        """min_i <p, a_i> for each row p (or for a single vector)."""
        return np.min(np.asarray(points, dtype=float) @ self.normals.T, axis=-1)


@dataclass(frozen=True)
class DualCoefficients:
    """Nonnegative weights alpha with sum(alpha_i a_i) closest to the target."""
    alpha: np.ndarray
    residual: float


def from_labeled_sample(points: Sequence[VectorLike], labels: Sequence[int]) -> PolyhedralCone:
    """
    Version-space cone of a labeled sample: normals a_i = y_i x_i.

    Args:
        points: m unit vectors x_i
        labels: m labels in {-1, +1}

    Returns:
        The cone K(x, y)
    """
    if len(points) == 0:
        raise InvalidInputError("labeled sample is empty")
    points = np.vstack([as_unit(p).coords for p in points])
    labels = np.asarray(labels).reshape(-1)
    if labels.size != points.shape[0]:
        raise InvalidInputError(f"{points.shape[0]} points but {labels.size} labels")
    if not np.all(np.isin(labels, (-1, 1))):
        raise InvalidInputError("labels must be -1 or +1")
    return PolyhedralCone(labels[:, None].astype(float) * points)


def rotate_cone(cone: PolyhedralCone, matrix: np.ndarray) -> PolyhedralCone:
    """Image M(K) of the cone under an orthogonal map."""
    return PolyhedralCone(cone.normals @ np.asarray(matrix).T)


def contains(cone: PolyhedralCone, v: VectorLike, tol: float = 0.0) -> bool:
    """True iff <v, a_i> >= -tol for every normal."""
    if tol < 0:
        raise InvalidInputError(f"tolerance must be >= 0, got {tol}")
    return bool(np.all(cone.normals @ as_array(v) >= -tol))


def is_proper(cone: PolyhedralCone) -> bool:
    """Check that no negated normal lies in the cone (K fits in a halfspace)."""
    return not any(contains(cone, -a) for a in cone.normals)


def project_dual(cone: PolyhedralCone, w: VectorLike) -> Tuple[np.ndarray, DualCoefficients]:
    """
    Euclidean projection of w onto the dual cone cone{a_i}.

    Solves min ||sum(alpha_i a_i) - w|| over alpha >= 0 with the
    Lawson-Hanson active-set method.

    Returns:
        (projected point, coefficients)

    Raises:
        NumericalFailureError: if the active-set solver hits its iteration cap
    """
    target = as_array(w)
    if target.size != cone.dim:
        raise InvalidInputError(f"dimension mismatch: {target.size} vs {cone.dim}")
    basis = cone.normals.T
    try:
        alpha, _ = nnls(basis, target, maxiter=100 * cone.size)
    except RuntimeError as e:
        fallback = lsq_linear(basis, target, bounds=(0.0, np.inf))
        best = np.maximum(fallback.x, 0.0)
        raise NumericalFailureError(f"NNLS did not converge: {e}", best_iterate=best,
                                    residual=float(np.linalg.norm(basis @ best - target)))

    alpha = np.maximum(alpha, 0.0)
    point = basis @ alpha
    residual = float(np.linalg.norm(point - target))
    return point, DualCoefficients(alpha=alpha, residual=residual)


def project_primal(cone: PolyhedralCone, w: VectorLike) -> np.ndarray:
    """Euclidean projection of w onto K via the Moreau decomposition."""
    target = as_array(w)
    dual_point, _ = project_dual(cone, -target)
    return target + dual_point


def separating_direction(cone: PolyhedralCone, w: VectorLike) -> UnitVector:
    """
    Unit z with <z, w> < 0 and <z, y> >= 0 for all y in K.

    z = normalize(P_K(w) - w), which lies in the dual cone.

    Raises:
        PreconditionError: if w is already in K
    """
    target = as_array(w)
    if contains(cone, target, MEMBERSHIP_TOLERANCE):
        raise PreconditionError("point lies in the cone; no separating direction exists")
    return UnitVector.from_vector(project_primal(cone, target) - target)


def _box_maximin(normals: np.ndarray) -> Optional[np.ndarray]:
    """
    Maximizer of min_i <v, a_i> over the box [-1, 1]^n from a linear program.
    Its direction keeps a positive margin on thin cones that subgradient
    steps jump over. None when the optimum is not positive.
    """
    m, n = normals.shape
    # variables (v, t): maximize t subject to t - <v, a_i> <= 0
    objective = np.zeros(n + 1)
    objective[-1] = -1.0
    constraints = np.hstack([-normals, np.ones((m, 1))])
    result = linprog(objective, A_ub=constraints, b_ub=np.zeros(m),
                     bounds=[(-1.0, 1.0)] * n + [(None, 1.0)], method='highs')
    if result.status != 0 or -result.fun <= 1e-12:
        return None
    return result.x[:n]


def interior_margin(cone: PolyhedralCone, iters: int = 500, restarts: int = 64,
                    rng: Optional[np.random.Generator] = None) -> Tuple[UnitVector, float]:
    """
    Approximate max over unit v of min_i <v, a_i> by projected subgradient ascent.

    A positive margin certifies that the cone has nonempty interior.

    Args:
        cone: The cone
        iters: Ascent steps per restart (step size 1/sqrt(t))
        restarts: Number of random restarts (plus starts at the mean normal and
            at the box maximin direction)
        rng: Generator for the restarts; defaults to a fixed-seed generator

    Returns:
        (best direction, its margin)
    """
    if iters < 1:
        raise InvalidInputError(f"iters must be >= 1, got {iters}")
    if rng is None:
        rng = np.random.default_rng(0)

    normals = cone.normals
    starts = rng.standard_normal((restarts, cone.dim))
    mean_normal = normals.mean(axis=0)
    if np.linalg.norm(mean_normal) > 1e-12:
        starts = np.vstack([mean_normal, starts])
    box_direction = _box_maximin(normals)
    if box_direction is not None:
        starts = np.vstack([box_direction, starts])
    v = starts / np.linalg.norm(starts, axis=1, keepdims=True)

    scores = np.min(v @ normals.T, axis=1)
    best_v, best_margin = v.copy(), scores.copy()
    for t in range(1, iters + 1):
        active = normals[np.argmin(v @ normals.T, axis=1)]
        tangent = active - np.sum(active * v, axis=1, keepdims=True) * v
        v = v + tangent / np.sqrt(t)
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        scores = np.min(v @ normals.T, axis=1)
        improved = scores > best_margin
        best_v[improved] = v[improved]
        best_margin[improved] = scores[improved]

    winner = int(np.argmax(best_margin))
    margin = float(best_margin[winner])
    if margin <= 0:
        logger.warning(f"Cone appears to have empty interior (margin {margin:.3e})")
    return UnitVector(best_v[winner]), margin
