#!/usr/bin/env python3
"""
Cone-Cap Optimizer - command-line entry point.

Subcommands:
    sample      Rejection-sample a cone cap and export the cloud as CSV
    psi         Evaluate psi on a grid of angles (n = 2) or at a given point
    optimize    Multistart descent on psi; JSON report, optional trace CSV
    experiment  Compare learning rules by Omega; JSON and CSV reports
    verify      Run the invariant suite; exits nonzero when a check fails

Exit codes: 0 success, 1 numerical failure or failed verification,
2 usage or configuration error.
"""

import argparse
import json
import logging
import sys
from dataclasses import asdict
from typing import Dict, List, Optional, Tuple

import numpy as np

from cone_algebra import PolyhedralCone, interior_margin
from errors import ConeCapError, ConfigurationError, PreconditionError
from halfspace_lab import LabeledSample, run_experiment, version_space_arc
from psi_objective import argmin_exact_2d, psi_exact_2d, psi_saa
from report_io import (angle_of, cloud_record, companion_path, location_record,
                       minima_report_record, write_json, write_rows_csv)
from run_config import RunConfig, resolve_config
from sphere_core import UnitVector
from sphere_optimizer import multistart_minimize, write_trace_csv
from spherical_sampling import ConeCloud, sample_cone_cap, write_cloud_csv
from verification import run_suite

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def configure_logging(verbose: bool = False, log_file: Optional[str] = None) -> None:
    """Send log records to stderr (and optionally a file); stdout stays free for results."""
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format=LOG_FORMAT,
        handlers=handlers,
        force=True
    )


def cone_arc(cone: PolyhedralCone):
    """Angular interval of a plane cone's cap, or None when it has empty interior."""
    return version_space_arc(LabeledSample(cone.normals, np.ones(cone.size, dtype=int)))


class ConeCapRunner:
    """
    Executes one resolved RunConfig.

    Each run_* method writes its artifact to config.out and returns the
    process exit status.
    """

    def __init__(self, config: RunConfig):
        self.config = config

    def _cone(self) -> Tuple[PolyhedralCone, float]:
        """The configured cone and its interior margin; an empty interior stops the run before sampling."""
        cone = self.config.build_cone()
        _, margin = interior_margin(cone)
        if margin <= 0:
            raise PreconditionError(f"cone has empty interior (margin {margin:.3e}); its cap has measure zero",
                                    interior_margin=margin, normals=cone.normals)
        logger.debug(f"Cone interior margin {margin:.4g}")
        return cone, margin

    def _cloud(self, cone: PolyhedralCone) -> ConeCloud:
        return sample_cone_cap(cone, self.config.n_points, self.config.seed,
                               threads=self.config.threads, antithetic=self.config.antithetic)

    def run_sample(self) -> int:
        cone, margin = self._cone()
        cloud = self._cloud(cone)
        write_cloud_csv(cloud, self.config.out)
        print(f"✅ {cloud.size} points, measure ≈ {cloud.measure_estimate:.6g} ± "
              f"{cloud.measure_std_error:.2g}, interior margin {margin:.4g} -> {self.config.out}")
        return 0

    def run_psi(self) -> int:
        config = self.config
        cone, _ = self._cone()
        cloud = self._cloud(cone)
        g = config.g_kind

        if config.w is not None:
            points = [UnitVector.from_vector(config.w)]
        elif config.n == 2:
            count = config.grid or 64
            angles = 2.0 * np.pi * np.arange(count) / count
            points = [UnitVector([np.cos(a), np.sin(a)]) for a in angles]
        else:
            raise ConfigurationError("psi needs --w unless n = 2")

        arc = cone_arc(cone) if config.n == 2 else None
        rows = []
        for point in points:
            estimate = psi_saa(point, cloud, g)
            row = {f"w{i}": value for i, value in enumerate(point.coords)}
            row.update({
                'theta': angle_of(point),
                'value': estimate.value,
                'scaled_value': estimate.scaled_value,
                'std_error': estimate.std_error,
                'scaled_std_error': estimate.scaled_std_error
            })
            if arc is not None:
                row['exact'] = psi_exact_2d(row['theta'], arc, g)
            rows.append(row)
        write_rows_csv(rows, config.out)
        print(f"✅ psi at {len(rows)} point(s) -> {config.out}")
        return 0

    def run_optimize(self) -> int:
        config = self.config
        cone, margin = self._cone()
        cloud = self._cloud(cone)
        opts = config.opt_options(keep_trace=bool(config.trace))
        report = multistart_minimize(cloud, config.g_kind, config.n_starts, config.seed,
                                     cluster_radius=config.cluster_radius, opts=opts,
                                     threads=config.threads)
        best = report.best.representative

        record: Dict = {
            'command': 'optimize',
            'seed': config.seed,
            'streams': config.seed_manifest(),
            'config': config.to_dict(),
            'cone': {'normals': cone.normals, 'interior_margin': margin},
            'cloud': cloud_record(cloud),
            'minima': minima_report_record(report, cloud),
            'best': {
                'minimizer': best,
                'angle': angle_of(best),
                'psi': psi_saa(best, cloud, config.g_kind),
                'location': location_record(cone, best)
            }
        }
        if config.n == 2:
            arc = cone_arc(cone)
            if arc is not None:
                exact_angle, exact_value = argmin_exact_2d(arc, config.g_kind)
                record['exact'] = {'arc': list(arc), 'argmin_angle': exact_angle, 'min_psi': exact_value}

        write_json(record, config.out)
        if config.trace:
            write_trace_csv(report.results[report.best.members[0]], config.trace)
        print(f"✅ {len(report.clusters)} minimum cluster(s) from {report.starts} starts; "
              f"best psi = {report.best.psi_value:.8g} -> {config.out}")
        return 0

    def run_experiment(self) -> int:
        config = self.config
        report = run_experiment(config.experiment_config(), threads=config.threads)
        record = report.to_dict()
        record['streams'] = config.seed_manifest()
        write_json(record, config.out)
        csv_path = companion_path(config.out, '.csv')
        write_rows_csv([asdict(row) for row in report.rules], csv_path)
        for row in report.rules:
            print(f"  {row.name:<20} omega = {row.omega:.5f} ± {row.std_error:.5f} "
                  f"({row.trials} trials, {row.failures} failed)")
        print(f"✅ Experiment report -> {config.out}, {csv_path}")
        return 0

    def run_verify(self) -> int:
        config = self.config
        outcome = run_suite(config.seed, full=config.full, threads=config.threads, only=config.checks)
        write_json(outcome, config.out)
        for check in outcome['checks']:
            print(f"  {'✅' if check['pass'] else '❌'} {check['name']}")
        return 0 if outcome['passed'] else 1

    def run(self) -> int:
        handler = getattr(self, f"run_{self.config.command}")
        return handler()


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--seed', type=int, help='master seed (unsigned 64-bit)')
    common.add_argument('--out', help='output artifact path')
    common.add_argument('--config', dest='config_file', help='JSON config file; flags override it')
    common.add_argument('--threads', type=int, help='worker count; results do not depend on it')
    common.add_argument('--verbose', action='store_true', help='debug logging')
    common.add_argument('--log-file', help='also write logs to this file')

    problem = argparse.ArgumentParser(add_help=False)
    problem.add_argument('--n', type=int, help='dimension')
    problem.add_argument('--m', type=int, help='number of normals for the random cone / sample size')
    problem.add_argument('--n-points', type=int, help='cone-cap cloud size N')
    problem.add_argument('--cone', help='halfspace, quadrant, orthant, random or explicit')
    problem.add_argument('--normals', type=json.loads, help='JSON list of normals for --cone explicit')
    problem.add_argument('--g', help='identity, square or two_one_minus_cos')
    problem.add_argument('--antithetic', action='store_true', default=None,
                         help='mirror the cloud through the span of the normals')

    parser = argparse.ArgumentParser(prog='cone-cap', description='Cone-cap functional optimizer and halfspace lab')
    commands = parser.add_subparsers(dest='command', required=True)

    commands.add_parser('sample', parents=[common, problem], help='sample a cone cap')

    psi = commands.add_parser('psi', parents=[common, problem], help='evaluate psi')
    psi.add_argument('--grid', type=int, help='number of angles on the circle (n = 2)')
    psi.add_argument('--w', type=json.loads, help='JSON evaluation point')

    optimize = commands.add_parser('optimize', parents=[common, problem], help='multistart minimization')
    optimize.add_argument('--n-starts', type=int)
    optimize.add_argument('--cluster-radius', type=float)
    optimize.add_argument('--tol', type=float)
    optimize.add_argument('--clamp', type=float)
    optimize.add_argument('--max-iters', type=int)
    optimize.add_argument('--trace', help='CSV path for the best run\'s descent trace')

    experiment = commands.add_parser('experiment', parents=[common], help='compare learning rules by Omega')
    experiment.add_argument('--n', type=int)
    experiment.add_argument('--m', type=int)
    experiment.add_argument('--n-points', type=int)
    experiment.add_argument('--trials', type=int)
    experiment.add_argument('--rules', type=lambda s: [r.strip() for r in s.split(',') if r.strip()],
                            help='comma-separated rule names')
    experiment.add_argument('--rule-starts', type=int)
    experiment.add_argument('--epoch-cap', type=int)

    verify = commands.add_parser('verify', parents=[common], help='run the invariant suite')
    verify.add_argument('--full', action='store_true', default=None, help='acceptance sizes')
    verify.add_argument('--checks', type=lambda s: [c.strip() for c in s.split(',') if c.strip()],
                        help='comma-separated subset of check names')
    return parser


def run_command(argv: Optional[List[str]] = None) -> int:
    """
    Parse arguments, run one subcommand and map failures to exit codes.

    Returns:
        0 on success, 1 on numerical failure or failed verification, 2 on usage errors
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code == 0 else 2

    configure_logging(args.verbose, args.log_file)
    overrides = {key: value for key, value in vars(args).items()
                 if key not in ('command', 'config_file', 'verbose', 'log_file')}

    try:
        config = resolve_config(args.command, args.config_file, overrides)
    except ConfigurationError as e:
        logger.error(f"Invalid configuration: {e.message}")
        print(f"❌ {e.message}", file=sys.stderr)
        return 2

    logger.info(f"Running {config.command} with seed {config.seed} on {config.threads} thread(s)")
    try:
        return ConeCapRunner(config).run()
    except ConfigurationError as e:
        logger.error(f"Invalid configuration: {e.message}")
        return 2
    except ConeCapError as e:
        logger.error(f"{config.command} failed: {e.message}")
        print(json.dumps(e.to_record(), indent=2, sort_keys=True))
        return 1


def main():
    """Main entry point for the cone-cap command line."""
    sys.exit(run_command())


if __name__ == "__main__":
    main()
