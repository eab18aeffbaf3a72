"""
Run configuration for the command-line workflows.

Values are resolved as built-in defaults, then per-command defaults, then a
JSON config file, then explicit command-line flags (flags win). Every
numeric field is range-checked before a run starts.
"""

import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from cone_algebra import PolyhedralCone
from errors import ConfigurationError, InvalidInputError
from halfspace_lab import ExperimentConfig, RuleKind, random_instance
from psi_objective import GKind
from rng_streams import stream_label, substream
from sphere_optimizer import OptOptions
from verification import CHECKS

logger = logging.getLogger(__name__)

COMMANDS = ('sample', 'psi', 'optimize', 'experiment', 'verify')
CONE_PRESETS = ('halfspace', 'quadrant', 'orthant', 'random', 'explicit')
CHECK_NAMES = tuple(name for name, _ in CHECKS)

COMMAND_DEFAULTS: Dict[str, Dict[str, Any]] = {
    'sample': {'out': 'cloud.csv'},
    'psi': {'out': 'psi.csv'},
    'optimize': {'out': 'optimize.json'},
    'experiment': {'out': 'experiment.json', 'n_points': 20000},
    'verify': {'out': 'verify.json'},
}

# (low, high) inclusive; None means unbounded
INTEGER_RANGES: Dict[str, Tuple[Optional[int], Optional[int]]] = {
    'seed': (0, 2 ** 64 - 1),
    'threads': (1, 256),
    'n': (2, 64),
    'm': (1, 64),
    'n_points': (1, 10 ** 7),
    'trials': (1, None),
    'n_starts': (2, None),
    'max_iters': (1, None),
    'epoch_cap': (1, None),
    'rule_starts': (2, None),
    'grid': (0, 10 ** 6),
}


@dataclass
class RunConfig:
    """
    Parameters of one CLI run.

    Attributes:
        command: Subcommand name
        seed: Master seed; every random draw derives from it
        out: Output artifact path
        threads: Worker count (results do not depend on it)
        n, m: Dimension and number of cone normals / sample points
        n_points: Cone-cap cloud size N
        trials: Experiment trials
        g: Integrand variant
        n_starts: Multistart descent starts
        cluster_radius: Geodesic radius merging minima
        tol, clamp, max_iters: Descent settings
        cone: Cone preset (halfspace, quadrant/orthant, random, explicit)
        normals: Explicit cone normals for cone='explicit'
        rules: Learning rules compared by `experiment`
        grid: Number of evaluation angles for `psi` on the circle
        w: Explicit evaluation point for `psi`
        trace: Optional CSV path for the best descent run's trace
        full: Run `verify` at acceptance sizes
        checks: Subset of `verify` check names (all when None)
        antithetic: Mirror cone clouds through span(normals)
        epoch_cap: Perceptron epoch cap
        rule_starts: Descent starts inside the Optimal / SphericalCentroid rules
    """
    command: str = 'verify'
    seed: int = 0
    out: Optional[str] = None
    threads: int = 1
    n: int = 3
    m: int = 5
    n_points: int = 10000
    trials: int = 500
    g: str = 'identity'
    n_starts: int = 20
    cluster_radius: float = 1e-3
    tol: float = 1e-8
    clamp: float = 1e-9
    max_iters: int = 1000
    cone: str = 'random'
    normals: Optional[List[List[float]]] = None
    rules: List[str] = field(default_factory=lambda: [kind.value for kind in RuleKind])
    grid: int = 0
    w: Optional[List[float]] = None
    trace: Optional[str] = None
    full: bool = False
    checks: Optional[List[str]] = None
    antithetic: bool = False
    epoch_cap: int = 1000
    rule_starts: int = 2

    def validate(self) -> 'RunConfig':
        """Check every field against its documented range."""
        if self.command not in COMMANDS:
            raise ConfigurationError(f"unknown command '{self.command}'")
        for name, (low, high) in INTEGER_RANGES.items():
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise ConfigurationError(f"{name} must be an integer, got {value!r}")
            if (low is not None and value < low) or (high is not None and value > high):
                raise ConfigurationError(f"{name}={value} outside [{low}, {high if high is not None else 'inf'}]")
        if not self.tol > 0:
            raise ConfigurationError(f"tol must be > 0, got {self.tol}")
        if not 0.0 < self.clamp <= 1e-6:
            raise ConfigurationError(f"clamp must lie in (0, 1e-6], got {self.clamp}")
        if not self.cluster_radius > 0:
            raise ConfigurationError(f"cluster_radius must be > 0, got {self.cluster_radius}")
        if self.cone not in CONE_PRESETS:
            raise ConfigurationError(f"unknown cone preset '{self.cone}' (choose from {', '.join(CONE_PRESETS)})")
        if self.cone == 'explicit' and not self.normals:
            raise ConfigurationError("cone='explicit' needs normals")
        if self.w is not None and len(self.w) != self.n:
            raise ConfigurationError(f"w has {len(self.w)} coordinates but n={self.n}")
        if self.checks is not None:
            unknown = sorted(set(self.checks) - set(CHECK_NAMES))
            if unknown or not self.checks:
                raise ConfigurationError(f"unknown verify checks: {unknown or self.checks} "
                                         f"(choose from {', '.join(CHECK_NAMES)})")
        try:
            GKind.parse(self.g)
            for rule in self.rules:
                RuleKind.parse(rule)
        except InvalidInputError as e:
            raise ConfigurationError(e.message)
        return self

    @property
    def g_kind(self) -> GKind:
        return GKind.parse(self.g)

    def opt_options(self, keep_trace: bool = False) -> OptOptions:
        return OptOptions(max_iters=self.max_iters, tol=self.tol, clamp=self.clamp, keep_trace=keep_trace)

    def experiment_config(self) -> ExperimentConfig:
        return ExperimentConfig(rules=tuple(self.rules), n=self.n, m=self.m, trials=self.trials,
                                seed=self.seed, n_points=self.n_points, n_starts=self.rule_starts,
                                epoch_cap=self.epoch_cap, antithetic=True, opts=self.opt_options())

    def build_cone(self) -> PolyhedralCone:
        """The cone selected by the `cone` preset."""
        if self.cone == 'halfspace':
            return PolyhedralCone(np.eye(self.n)[:1])
        if self.cone in ('quadrant', 'orthant'):
            return PolyhedralCone(np.eye(self.n))
        if self.cone == 'explicit':
            normals = np.asarray(self.normals, dtype=float)
            if normals.ndim != 2 or normals.shape[1] != self.n:
                raise ConfigurationError(f"normals must be a list of {self.n}-vectors")
            return PolyhedralCone(normals)
        _, sample = random_instance(self.n, self.m, substream(self.seed, 'cone'))
        return sample.cone()

    def seed_manifest(self) -> List[str]:
        """Named substreams a run of this command draws from."""
        streams = {
            'sample': ['cloud'],
            'psi': ['cloud'],
            'optimize': ['cloud', 'starts'],
            'experiment': ['instance', 'rule-cloud', 'rule'],
            'verify': ['verify'],
        }[self.command]
        if self.cone == 'random' and self.command in ('sample', 'psi', 'optimize'):
            streams = ['cone'] + streams
        return [stream_label(self.seed, name) for name in streams]

    def to_dict(self) -> Dict[str, Any]:
        """Echo of the parameters that determine results (paths and worker count excluded)."""
        record = asdict(self)
        for key in ('out', 'trace', 'threads'):
            record.pop(key)
        return record


def load_config_file(path: Optional[str]) -> Dict[str, Any]:
    """Read a JSON config file; a missing path yields no overrides."""
    if not path:
        return {}
    if not os.path.exists(path):
        raise ConfigurationError(f"config file not found: {path}")
    try:
        with open(path, 'r', encoding='utf-8') as f:
            loaded = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigurationError(f"cannot read config file {path}: {e}")
    if not isinstance(loaded, dict):
        raise ConfigurationError(f"config file {path} must hold a JSON object")
    return loaded


def resolve_config(command: str, config_file: Optional[str] = None,
                   overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """
    Merge defaults, the config file and command-line overrides.

    Args:
        command: Subcommand name
        config_file: Optional JSON file path
        overrides: Flags given explicitly on the command line (None values skipped)

    Returns:
        A validated RunConfig
    """
    known = {f.name for f in fields(RunConfig)}
    settings: Dict[str, Any] = {'command': command}
    settings.update(COMMAND_DEFAULTS.get(command, {}))

    file_settings = load_config_file(config_file)
    unknown = sorted(set(file_settings) - known)
    if unknown:
        raise ConfigurationError(f"unknown config keys: {', '.join(unknown)}")
    settings.update(file_settings)
    settings.update({key: value for key, value in (overrides or {}).items()
                     if value is not None and key in known})
    settings['command'] = command

    config = RunConfig(**settings).validate()
    logger.debug(f"Resolved configuration: {config.to_dict()}")
    return config
