"""
Sphere Core - exact geometry on the unit sphere S^{n-1}.
Geodesic distance, reflections, geodesic midpoints and random rotations.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Union

import numpy as np
from scipy.stats import special_ortho_group

from errors import DegenerateGeodesicError, InvalidInputError

logger = logging.getLogger(__name__)

# Inputs whose norm deviates more than this from 1 are rejected
UNIT_TOLERANCE = 1e-9
ANTIPODAL_TOLERANCE = 1e-9


@dataclass(frozen=True, eq=False)
class UnitVector:
    """
    A point on S^{n-1}.

    The constructor accepts vectors within UNIT_TOLERANCE of the sphere and
    renormalizes them, so the stored coordinates have norm 1 to machine
    precision.
    """
    coords: np.ndarray

    def __post_init__(self):
        coords = np.array(self.coords, dtype=float).reshape(-1)
        if coords.size < 2:
            raise InvalidInputError(f"unit vectors need dimension >= 2, got {coords.size}")
        if not np.all(np.isfinite(coords)):
            raise InvalidInputError("unit vector has non-finite coordinates")
        norm = np.linalg.norm(coords)
        if abs(norm - 1.0) > UNIT_TOLERANCE:
            raise InvalidInputError(f"vector is not unit (norm {norm:.12g})", norm=norm)
        coords = coords / norm
        coords.setflags(write=False)
        object.__setattr__(self, 'coords', coords)

    @classmethod
    def from_vector(cls, vector) -> 'UnitVector':
        """Normalize an arbitrary nonzero vector onto the sphere."""
        vector = np.asarray(vector, dtype=float).reshape(-1)
        norm = np.linalg.norm(vector)
        if not np.isfinite(norm) or norm == 0.0:
            raise InvalidInputError("cannot normalize a zero or non-finite vector")
        return cls(vector / norm)

    @classmethod
    def basis(cls, dim: int, index: int) -> 'UnitVector':
        """Standard basis vector e_index in R^dim."""
        coords = np.zeros(dim)
        coords[index] = 1.0
        return cls(coords)

    @property
    def dim(self) -> int:
        return self.coords.size

    def __neg__(self) -> 'UnitVector':
        return UnitVector(-self.coords)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.coords, dtype=dtype)

    def __repr__(self) -> str:
        return f"UnitVector({np.array2string(self.coords, precision=6)})"


VectorLike = Union[UnitVector, np.ndarray, list, tuple]


def as_array(point: VectorLike) -> np.ndarray:
    """Plain float array view of a vector-like value."""
    if isinstance(point, UnitVector):
        return point.coords
    return np.asarray(point, dtype=float).reshape(-1)


def as_unit(point: VectorLike) -> UnitVector:
    """Validate a vector-like value as a point on the sphere."""
    if isinstance(point, UnitVector):
        return point
    return UnitVector(point)


def normalize_rows(points: np.ndarray) -> np.ndarray:
    """Project every row of a matrix onto the sphere."""
    points = np.asarray(points, dtype=float)
    norms = np.linalg.norm(points, axis=-1, keepdims=True)
    return points / norms


def geodesic_distance(a: VectorLike, b: VectorLike) -> float:
    """
    Arc length between two unit vectors.

    Args:
        a: First point on the sphere
        b: Second point on the sphere

    Returns:
        Distance in radians, in [0, pi]
    """
    a, b = as_unit(a), as_unit(b)
    if a.dim != b.dim:
        raise InvalidInputError(f"dimension mismatch: {a.dim} vs {b.dim}")
    inner = float(np.clip(np.dot(a.coords, b.coords), -1.0, 1.0))
    return float(np.arccos(inner))


def geodesic_distances(w: VectorLike, points: np.ndarray) -> np.ndarray:
    """Vectorized distances from w to every row of points (rows assumed unit)."""
    inner = np.clip(np.asarray(points) @ as_array(w), -1.0, 1.0)
    return np.arccos(inner)


class ReflectionKind(Enum):
    """Hyperplane: x -> x - 2<x,z>z. Axis: x -> 2<x,w>w - x."""
    HYPERPLANE = 'hyperplane'
    AXIS = 'axis'


@dataclass(frozen=True)
class Reflection:
    kind: ReflectionKind
    direction: UnitVector

    def matrix(self) -> np.ndarray:
        """Orthogonal matrix of the reflection."""
        d = self.direction.coords
        projector = np.outer(d, d)
        identity = np.eye(d.size)
        if self.kind is ReflectionKind.HYPERPLANE:
            return identity - 2.0 * projector
        return 2.0 * projector - identity


def reflect(r: Reflection, p: VectorLike) -> UnitVector:
    """
    Apply a reflection to a point on the sphere.

    Args:
        r: Hyperplane reflection (normal z) or axis reflection (axis w)
        p: Point to reflect

    Returns:
        The reflected point
    """
    p = as_unit(p)
    d = r.direction.coords
    if p.dim != d.size:
        raise InvalidInputError(f"dimension mismatch: {p.dim} vs {d.size}")
    inner = np.dot(p.coords, d)
    if r.kind is ReflectionKind.HYPERPLANE:
        image = p.coords - 2.0 * inner * d
    else:
        image = 2.0 * inner * d - p.coords
    return UnitVector.from_vector(image)


def geodesic_midpoint(a: VectorLike, b: VectorLike) -> UnitVector:
    """
    Midpoint of the shortest geodesic from a to b.

    Raises:
        DegenerateGeodesicError: if a and b are (numerically) antipodal
    """
    a, b = as_unit(a), as_unit(b)
    inner = float(np.dot(a.coords, b.coords))
    if inner < -1.0 + ANTIPODAL_TOLERANCE:
        raise DegenerateGeodesicError("midpoint of an antipodal pair is not unique", inner=inner)
    return UnitVector.from_vector(a.coords + b.coords)


def random_rotation(dim: int, rng: np.random.Generator) -> np.ndarray:
    """
    Haar-distributed rotation (orthogonal, determinant +1).

    Args:
        dim: Ambient dimension n >= 2
        rng: Generator; the result is a deterministic function of its state

    Returns:
        (dim, dim) orthogonal matrix
    """
    if dim < 2:
        raise InvalidInputError(f"rotations need dimension >= 2, got {dim}")
    return np.asarray(special_ortho_group.rvs(dim, random_state=rng), dtype=float).reshape(dim, dim)


def rotate(matrix: np.ndarray, p: VectorLike) -> UnitVector:
    """Image of a point under an orthogonal map."""
    return UnitVector.from_vector(np.asarray(matrix) @ as_array(p))
