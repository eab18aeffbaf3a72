"""
Error types shared by the cone-cap modules.
Every error can render itself as a JSON-ready record for the CLI.
"""

from typing import Any, Dict, Optional

import numpy as np


class ConeCapError(Exception):
    """Base class for all errors raised by the library."""

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_record(self) -> Dict[str, Any]:
        """Convert the error into a JSON-serializable record."""
        record_details = {}
        for key, value in self.details.items():
            if isinstance(value, np.ndarray):
                value = value.tolist()
            elif isinstance(value, np.generic):
                value = value.item()
            elif not isinstance(value, (str, int, float, bool, list, dict, type(None))):
                value = repr(value)
            record_details[key] = value
        return {
            'error': type(self).__name__,
            'message': self.message,
            'details': record_details
        }


class InvalidInputError(ConeCapError, ValueError):
    """Input violates a documented range or shape."""


class DegenerateGeodesicError(InvalidInputError):
    """The geodesic between two points is not unique (antipodal pair)."""


class PreconditionError(ConeCapError):
    """A documented precondition of an operation does not hold."""


class NumericalFailureError(ConeCapError):
    """A numerical kernel failed; carries the best iterate it reached."""

    def __init__(self, message: str, best_iterate: Optional[np.ndarray] = None, **details: Any):
        super().__init__(message, **details)
        self.best_iterate = best_iterate


class LowAcceptanceError(NumericalFailureError):
    """Rejection sampling exhausted its attempt budget before filling the cloud."""

    def __init__(self, message: str, partial_cloud=None, measure_estimate: float = 0.0,
                 attempts: int = 0, **details: Any):
        super().__init__(message, measure_estimate=measure_estimate, attempts=attempts, **details)
        self.partial_cloud = partial_cloud
        self.measure_estimate = measure_estimate
        self.attempts = attempts


class NonConvergenceError(NumericalFailureError):
    """An iterative learner hit its iteration cap."""


class ConfigurationError(InvalidInputError):
    """A run configuration is malformed or out of range (CLI usage error)."""
