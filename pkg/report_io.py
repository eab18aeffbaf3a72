"""
Report writers: JSON records and one-row-per-item CSV tables.

All numbers pass through `to_jsonable` so numpy scalars, arrays and unit
vectors serialize the same way everywhere, and files are written with
sorted keys so identical runs give identical bytes.
"""

import json
import logging
import math
import os
from dataclasses import asdict, is_dataclass
from enum import Enum
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from cone_algebra import PolyhedralCone, contains, project_dual
from sphere_core import UnitVector
from sphere_optimizer import MinimaReport, OptResult
from spherical_sampling import ConeCloud

logger = logging.getLogger(__name__)


def to_jsonable(value: Any) -> Any:
    """Recursively convert library values into plain JSON types."""
    if isinstance(value, UnitVector):
        return value.coords.tolist()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return to_jsonable(value.item())
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if is_dataclass(value) and not isinstance(value, type):
        return to_jsonable(asdict(value))
    if isinstance(value, dict):
        return {str(key): to_jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(item) for item in value]
    return value


def write_json(record: Dict, path: str) -> None:
    """Write a record as indented, key-sorted JSON."""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        json.dump(to_jsonable(record), f, indent=2, sort_keys=True, ensure_ascii=False)
        f.write('\n')
    logger.info(f"Report written to {path}")


def write_rows_csv(rows: List[Dict], path: str, columns: Optional[List[str]] = None) -> None:
    """Write one CSV row per record with full float precision."""
    df = pd.DataFrame([to_jsonable(row) for row in rows], columns=columns)
    df.to_csv(path, index=False, float_format='%.17g', lineterminator='\n')
    logger.info(f"{len(df)} rows exported to {path}")


def companion_path(path: str, extension: str) -> str:
    """Same path with a different extension, e.g. report.json -> report.csv."""
    stem, _ = os.path.splitext(path)
    return stem + extension


def angle_of(point: UnitVector) -> Optional[float]:
    """Polar angle in [0, 2pi) for points on the circle; None otherwise."""
    if point.dim != 2:
        return None
    return float(np.mod(np.arctan2(point.coords[1], point.coords[0]), 2.0 * np.pi))


def cloud_record(cloud: ConeCloud) -> Dict[str, Any]:
    return {
        'n_points': cloud.size,
        'dim': cloud.dim,
        'measure_estimate': cloud.measure_estimate,
        'measure_std_error': cloud.measure_std_error,
        'attempts': cloud.attempts,
        'antithetic': cloud.antithetic,
        'stream': cloud.seed
    }


def location_record(cone: PolyhedralCone, point: UnitVector) -> Dict[str, Any]:
    """Where a point sits relative to K and its dual."""
    _, coefficients = project_dual(cone, point)
    return {
        'in_cone': contains(cone, point, 1e-6),
        'cone_margin': float(np.min(cone.normals @ point.coords)),
        'dual_residual': coefficients.residual
    }


def opt_result_record(result: OptResult) -> Dict[str, Any]:
    return {
        'minimizer': result.minimizer,
        'angle': angle_of(result.minimizer),
        'psi_value': result.psi_value,
        'iterations': result.iterations,
        'grad_norm': result.grad_norm,
        'converged': result.converged,
        'stalled': result.stalled
    }


def minima_report_record(report: MinimaReport, cloud: ConeCloud) -> Dict[str, Any]:
    """Serializable view of a multistart run; scaled values multiply by the measure estimate."""
    clusters = [{
        'representative': cluster.representative,
        'angle': angle_of(cluster.representative),
        'psi_value': cluster.psi_value,
        'scaled_psi_value': cluster.psi_value * cloud.measure_estimate,
        'multiplicity': cluster.multiplicity,
        'members': list(cluster.members)
    } for cluster in report.clusters]
    return {
        'starts': report.starts,
        'unsettled': report.unsettled,
        'clusters': clusters,
        'runs': [opt_result_record(result) for result in report.results]
    }
