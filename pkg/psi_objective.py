"""
Psi Objective - the cone-cap functional psi_K(w) = ∫_{K_1} g(rho(w, y)) dsigma(y).

Provides the integrand shapes g, the sample-average (SAA) estimate of psi
over a ConeCloud with its Riemannian gradient, and an exact quadrature
oracle for the circle (n = 2).
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Tuple, Union

import numpy as np
from scipy.integrate import quad
from scipy.optimize import minimize_scalar

from errors import InvalidInputError
from sphere_core import VectorLike, as_array, as_unit
from spherical_sampling import ConeCloud

logger = logging.getLogger(__name__)

ANGLE_TOLERANCE = 1e-9
DEFAULT_CLAMP = 1e-9


class GKind(Enum):
    """Integrand shapes g: [0, pi] -> R."""
    IDENTITY = 'identity'
    SQUARE = 'square'
    TWO_ONE_MINUS_COS = 'two_one_minus_cos'

    @classmethod
    def parse(cls, value: Union[str, 'GKind']) -> 'GKind':
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            choices = ', '.join(kind.value for kind in cls)
            raise InvalidInputError(f"unknown g variant '{value}' (choose from {choices})")

    @property
    def max_value(self) -> float:
        """g(pi), the largest value of every variant."""
        return float(g_eval(self, np.pi)[0])


@dataclass(frozen=True)
class PsiEstimate:
    """
    SAA estimate of psi at one point.

    value is the cloud mean (1/N) sum g(rho(w, y_j)); scaled_value multiplies
    it by the cloud's measure estimate to estimate the integral itself.
    """
    value: float
    scaled_value: float
    std_error: float
    scaled_std_error: float
    n_points: int


@dataclass(frozen=True)
class PsiGradient:
    """Riemannian gradient of the SAA objective and the number of dropped terms."""
    vector: np.ndarray
    dropped: int

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.vector))


def g_eval(g: GKind, t) -> Tuple[np.ndarray, np.ndarray]:
    """
    Value and derivative of g at t.

    Args:
        g: Integrand shape
        t: Angle(s) in [0, pi]

    Returns:
        (g(t), g'(t)), scalars for scalar input
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < -ANGLE_TOLERANCE) or np.any(t > np.pi + ANGLE_TOLERANCE):
        raise InvalidInputError("angle outside [0, pi]")
    t = np.clip(t, 0.0, np.pi)

    if g is GKind.IDENTITY:
        value, derivative = t, np.ones_like(t)
    elif g is GKind.SQUARE:
        value, derivative = t * t, 2.0 * t
    elif g is GKind.TWO_ONE_MINUS_COS:
        value, derivative = 2.0 * (1.0 - np.cos(t)), 2.0 * np.sin(t)
    else:
        raise InvalidInputError(f"unsupported g variant {g}")

    if value.ndim == 0:
        return float(value), float(derivative)
    return value, derivative


def _g_values(g: GKind, distances: np.ndarray) -> np.ndarray:
    if g is GKind.IDENTITY:
        return distances
    if g is GKind.SQUARE:
        return distances * distances
    return 2.0 * (1.0 - np.cos(distances))


def pointwise_values(w: VectorLike, cloud: ConeCloud, g: GKind) -> np.ndarray:
    """g(rho(w, y_j)) for every cloud point."""
    w = as_array(w)
    inner = cloud.points @ w
    sines = np.linalg.norm(cloud.points - inner[:, None] * w, axis=1)
    return _g_values(g, np.arctan2(sines, inner))


def psi_saa(w: VectorLike, cloud: ConeCloud, g: GKind) -> PsiEstimate:
    """
    Sample-average estimate of psi_K(w) over a fixed cloud.

    Args:
        w: Evaluation point
        cloud: Uniform sample of the cone cap
        g: Integrand shape

    Returns:
        PsiEstimate with value, scaled value and standard errors
    """
    if cloud.size == 0:
        raise InvalidInputError("cannot evaluate psi on an empty cloud")
    w = as_unit(w)
    values = pointwise_values(w, cloud, g)
    n_points = values.size
    value = float(values.mean())
    std_error = float(values.std(ddof=1) / np.sqrt(n_points)) if n_points > 1 else 0.0

    measure = cloud.measure_estimate
    scaled_value = value * measure
    # delta method: both the mean and the measure estimate are noisy
    scaled_std_error = float(np.hypot(measure * std_error, value * cloud.measure_std_error))
    return PsiEstimate(value=value, scaled_value=scaled_value, std_error=std_error,
                       scaled_std_error=scaled_std_error, n_points=n_points)


def psi_grad_saa(w: VectorLike, cloud: ConeCloud, g: GKind,
                 clamp: float = DEFAULT_CLAMP) -> PsiGradient:
    """
    Riemannian gradient of the SAA objective at w.

    Each cloud point contributes -g'(rho_j) * t_j / ||t_j|| with tangent
    t_j = y_j - <w,y_j> w. Points whose tangent is shorter than `clamp`
    (within about `clamp` radians of w or -w) have no defined direction and
    are dropped; they still count in the 1/N normalization.

    Args:
        w: Base point
        cloud: Uniform sample of the cone cap
        g: Integrand shape
        clamp: Drop threshold in (0, 1e-6]

    Returns:
        PsiGradient tangent at w
    """
    if not 0.0 < clamp <= 1e-6:
        raise InvalidInputError(f"clamp must lie in (0, 1e-6], got {clamp}")
    if cloud.size == 0:
        raise InvalidInputError("cannot differentiate psi on an empty cloud")
    w = as_unit(w).coords
    inner = cloud.points @ w
    tangents = cloud.points - inner[:, None] * w
    lengths = np.linalg.norm(tangents, axis=1)
    keep = lengths > clamp
    dropped = int(cloud.size - np.count_nonzero(keep))

    tangents, lengths = tangents[keep], lengths[keep]
    # atan2 resolves small angles that arccos rounds away
    _, slopes = g_eval(g, np.arctan2(lengths, inner[keep]))
    weights = np.asarray(slopes) / lengths
    gradient = -(weights[:, None] * tangents).sum(axis=0) / cloud.size
    gradient -= np.dot(gradient, w) * w

    if dropped:
        logger.debug(f"Dropped {dropped} gradient terms within clamp {clamp:g} of ±w")
    return PsiGradient(vector=gradient, dropped=dropped)


def _wrapped_distance(phi, theta: float):
    """Angular distance on the circle between angles phi and theta."""
    delta = np.mod(np.asarray(phi) - theta + np.pi, 2.0 * np.pi) - np.pi
    return np.abs(delta)


def psi_exact_2d(theta: float, arc: Tuple[float, float], g: GKind) -> float:
    """
    Exact psi on the circle: (1/2pi) ∫_{phi0}^{phi1} g(dist(theta, phi)) dphi.

    Args:
        theta: Angle of the evaluation point
        arc: Cap as an angular interval [phi0, phi1], length in (0, pi]
        g: Integrand shape

    Returns:
        psi value (normalized by the circle's length 2pi)
    """
    phi0, phi1 = float(arc[0]), float(arc[1])
    if not phi0 < phi1:
        raise InvalidInputError(f"arc must satisfy phi0 < phi1, got [{phi0}, {phi1}]")
    if phi1 - phi0 > np.pi + ANGLE_TOLERANCE:
        raise InvalidInputError(f"arc length {phi1 - phi0:.6g} exceeds pi (cap is not proper)")

    # integrand kinks where phi meets theta or its antipode
    breakpoints = []
    for kink in (theta, theta + np.pi):
        k = np.ceil((phi0 - kink) / (2.0 * np.pi))
        candidate = kink + 2.0 * np.pi * k
        while candidate < phi1:
            if candidate > phi0:
                breakpoints.append(candidate)
            candidate += 2.0 * np.pi

    def integrand(phi: float) -> float:
        return float(_g_values(g, _wrapped_distance(phi, theta)))

    edges = [phi0] + sorted(breakpoints) + [phi1]
    total = 0.0
    for left, right in zip(edges[:-1], edges[1:]):
        piece, _ = quad(integrand, left, right, epsabs=1e-13, epsrel=1e-12, limit=200)
        total += piece
    return total / (2.0 * np.pi)


def argmin_exact_2d(arc: Tuple[float, float], g: GKind) -> Tuple[float, float]:
    """
    Minimizer of the exact circle objective over the arc's dual range.

    Every global minimum lies inside the arc, so a bounded scalar search
    over [phi0, phi1] suffices.

    Returns:
        (theta*, psi(theta*))
    """
    phi0, phi1 = float(arc[0]), float(arc[1])
    result = minimize_scalar(lambda theta: psi_exact_2d(theta, arc, g), bounds=(phi0, phi1),
                             method='bounded', options={'xatol': 1e-10})
    return float(result.x), float(result.fun)
