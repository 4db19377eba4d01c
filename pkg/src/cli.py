"""
Command-line interface for cutlocus
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Callable, Dict, Optional

import numpy as np

from .canonical_maps import PerturbedMap, ModelRayFamily, canonical_form_maps
from .cdc_tracer import (SLACK_THRESHOLD, a3_join, build_retort, cdc_rows, chart_for, d4_root_analysis,
                         image_rows, retort_gain_gap, trace_cdc)
from .config import Config
from .conjugate_analysis import (classify_singularity, detect_conjugate_events, events_to_json, lambda_profile,
                                 lipschitz_estimate)
from .errors import CompatibilityError, ConfigError, CutLocusError
from .geodesic_flow import BoundaryRayFamily, PhaseState, PointRayFamily, integrate_geodesic
from .geometry import load_manifold
from .hjbvp_solver import (BoundaryData, PointSource, SampleGrid, boundary_data_from_doc, check_compatibility,
                           cut_records, lax_oleinik_solve, ray_family_for, semiconcavity_check,
                           singular_set_extract, singular_set_to_json, solution_rows)
from .split_locus import (build_point_source_locus, build_split_locus_from_constants, build_torus_family,
                          model_to_json, render_model_svg, torus_margin, verify_balanced, verify_splits)
from .utils.file import sanitize_filename, write_csv, write_json
from .utils.plotting import render_locus_svg
from .utils.validators import COMMAND_PARAMS, JobSpec

logger = logging.getLogger('cutlocus')

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def create_argument_parser():
    """Create and configure argument parser"""

    parser = argparse.ArgumentParser(
        prog='cutlocus',
        description='cutlocus: cut loci, split loci and conjugate descending curves',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog='''
Examples:
  %(prog)s cut-locus --job annulus.json --out runs/annulus
  %(prog)s split-family --job torus.json --threads 4
  %(prog)s d4-roots --kind minus --a 0 --b 0

Environment variables for defaults:
  CUTLOCUS_THREADS      - Worker threads (0 = auto)
  CUTLOCUS_TOL          - Integrator tolerance
  CUTLOCUS_EPSILON_MIN  - Minimizer separation threshold
  CUTLOCUS_SLACK_C      - ACDC rotation constant
  CUTLOCUS_CONJUGACY_TOL - Singular-value ratio marking a conjugate cut point
  CUTLOCUS_OUTPUT_DIR   - Default artifact directory
        '''
    )

    parser.add_argument('command', choices=sorted(COMMAND_PARAMS), help='Computation to run')

    parser.add_argument('--job', '-j', type=Path, help='JSON job file')

    parser.add_argument('--out', '-o', type=Path, help='Artifact directory (default: job output_dir or CUTLOCUS_OUTPUT_DIR)')

    parser.add_argument(
        '--threads', '-t',
        type=int,
        default=None,
        help=f'Worker threads, 0 = auto (default: {Config.THREADS})'
    )

    parser.add_argument('--tol', type=float, default=None, help=f'Integrator tolerance (default: {Config.TOL})')

    parser.add_argument(
        '--epsilon-min',
        type=float,
        default=None,
        help=f'Minimizer separation threshold (default: {Config.EPSILON_MIN})'
    )

    parser.add_argument('--kind', choices=['minus', 'plus'], help='D4 kind for d4-roots')
    parser.add_argument('--a', type=float, help='First D4 chamber parameter')
    parser.add_argument('--b', type=float, help='Second D4 chamber parameter')

    parser.add_argument('--verbose', '-v', action='store_true', default=Config.VERBOSE, help='Debug logging')

    return parser


def setup_logging(verbose: bool) -> None:
    level = logging.DEBUG if verbose or Config.DEBUG else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s [%(levelname)s] %(name)s: %(message)s")


# Helpers ------------------------------------------------------------------


def _source(manifold, params):
    if 'point' in params:
        return PointSource(np.asarray(params['point'], dtype=float))
    return boundary_data_from_doc(manifold, params.get('boundary'))


def _is_planar(manifold) -> bool:
    return manifold.ambient_dim == 2


def _boundary_curves(manifold):
    return [c.point(c.parameters(256)) for c in manifold.boundary_components]


def _ray_family(manifold, params):
    if 'point' in params:
        return PointRayFamily(manifold, params['point']), np.linspace(0.0, 2 * np.pi, params.get('rays', 64),
                                                                      endpoint=False)
    data = boundary_data_from_doc(manifold, params.get('boundary'))
    cid = params.get('component', manifold.boundary_components[0].id if manifold.boundary_components else None)
    comps = {c.id: c for c in manifold.boundary_components}
    if cid not in comps:
        raise ConfigError(f"no boundary component with id {cid}")
    family = BoundaryRayFamily(manifold, comps[cid], data.g_for(cid), lambda s: data.derivative(cid, s))
    return family, comps[cid].parameters(params.get('rays', 64))


# Commands -----------------------------------------------------------------


def run_geodesic(job: JobSpec, manifold, out: Path, threads: Optional[int]) -> dict:
    start = PhaseState(np.asarray(job.get('point'), dtype=float), np.asarray(job.get('velocity'), dtype=float))
    traj = integrate_geodesic(manifold, start, float(job.get('t', 1.0)), tol=job.get('tol'),
                              samples=int(job.get('samples', 101)))
    n = len(start.position)
    header = ['t'] + [f'x{i + 1}' for i in range(n)] + [f'v{i + 1}' for i in range(n)]
    write_csv(header, [[s.time, *s.position, *s.velocity] for s in traj.states], out / 'trajectory.csv')
    summary = {'exited': traj.exited, 'exit_time': traj.exit_time, 'energy_drift': traj.energy_drift}
    if _is_planar(manifold):
        P = np.array([s.position for s in traj.states])
        render_locus_svg(out / 'trajectory.svg', P[[0, -1]], None, [P], _boundary_curves(manifold), 'geodesic')
    return summary


def run_conjugate_locus(job: JobSpec, manifold, out: Path, threads: Optional[int]) -> dict:
    family, zs = _ray_family(manifold, job.params)
    t_max = float(job.get('t_max', 2 * np.pi))
    k_max = int(job.get('k_max', 2))
    profile = lambda_profile(family, zs, k_max, t_max, threads)
    header = ['z'] + [f'lambda_{k + 1}' for k in range(k_max)]
    write_csv(header, [[z, *row] for z, row in zip(zs, profile.values)], out / 'lambda.csv')

    events = []
    if job.get('classify', True):
        for z, lam in zip(zs, profile.column(1)):
            if not np.isfinite(lam):
                continue
            first = detect_conjugate_events(family, z, t_max)[0]
            first.cls = classify_singularity(first, family)
            events.append(first)
    write_json({'events': events_to_json(events)}, out / 'events.json')

    finite = [(z, lam) for z, lam in zip(zs, profile.column(1)) if np.isfinite(lam)]
    if _is_planar(manifold) and finite:
        P = np.array([family.exponential(lam, z) for z, lam in finite])
        render_locus_svg(out / 'conjugate_locus.svg', P, None, [], _boundary_curves(manifold), 'first conjugate locus')
    return {'rays': len(zs), 'conjugate_rays': len(finite), 'lipschitz': lipschitz_estimate(profile, 1),
            'classes': sorted({e.cls for e in events})}


def run_cut_locus(job: JobSpec, manifold, out: Path, threads: Optional[int]) -> dict:
    source = _source(manifold, job.params)
    grid = SampleGrid(manifold, int(job.get('resolution', 64)))
    kwargs = {k: job.get(k) for k in ('samples', 'epsilon_min') if job.get(k) is not None}
    solution = lax_oleinik_solve(manifold, source, grid, threads, **kwargs)
    solver = solution.solver
    t_max = float(job.get('t_max', 4.0))
    rays = int(job.get('rays', 64))
    records = []
    if solver.is_point_source:
        records = cut_records(solver, ray_family_for(solver), 2 * np.pi * np.arange(rays) / rays, t_max, threads)
    else:
        for comp in solver.components:
            records += cut_records(solver, ray_family_for(solver, comp.id), comp.parameters(rays), t_max, threads)
    S = singular_set_extract(solution, records)
    write_json(singular_set_to_json(S), out / 'singular_set.json')
    write_json({'cut_records': [r.to_dict() for r in records]}, out / 'cut_records.json')
    if _is_planar(manifold):
        cut_points = np.array([r.point for r in records]) if records else np.zeros((0, 2))
        render_locus_svg(out / 'cut_locus.svg', np.vstack([S.points, cut_points]),
                         ['CLEAVE'] * len(S) + ['POINT'] * len(cut_points), [],
                         _boundary_curves(manifold), 'cut locus')
    reasons = {}
    for r in records:
        reasons[r.reason] = reasons.get(r.reason, 0) + 1
    return {'singular_points': len(S), 'cut_reasons': reasons}


def run_solve_hjbvp(job: JobSpec, manifold, out: Path, threads: Optional[int]) -> dict:
    source = _source(manifold, job.params)
    summary = {}
    if isinstance(source, BoundaryData):
        report = check_compatibility(manifold, source)
        summary['compatibility'] = report.to_dict()
        if not report.ok:
            raise CompatibilityError(f"boundary data is not compatible (margin {report.margin:.6g})",
                                     margin=report.margin)
    grid = SampleGrid(manifold, int(job.get('resolution', 64)))
    kwargs = {k: job.get(k) for k in ('samples', 'epsilon_min') if job.get(k) is not None}
    solution = lax_oleinik_solve(manifold, source, grid, threads, **kwargs)
    header, rows = solution_rows(solution)
    write_csv(header, rows, out / 'solution.csv')
    S = singular_set_extract(solution)
    write_json(singular_set_to_json(S), out / 'singular_set.json')
    segments = job.get('semiconcavity')
    if segments:
        sc = semiconcavity_check(solution.solver, segments)
        summary['semiconcavity'] = {'max_defect': sc.max_defect, 'constant': sc.constant}
    if _is_planar(manifold):
        render_locus_svg(out / 'singular_set.svg', S.points, ['CLEAVE'] * len(S), [],
                         _boundary_curves(manifold), 'singular set')
    summary['singular_points'] = len(S)
    return summary


def _build_model(job: JobSpec, manifold, threads, parameter):
    family = job.get('family', 'constants')
    resolution = int(job.get('resolution', 64))
    if family == 'torus':
        if manifold.kind != 'flat_torus':
            raise ConfigError("the torus family needs a flat_torus manifold")
        return build_torus_family(parameter, resolution, job.get('point', (0.0, 0.0)), manifold.periods,
                                  threads=threads)
    if family == 'constants':
        data = boundary_data_from_doc(manifold, job.get('boundary'))
        return build_split_locus_from_constants(manifold, data, parameter, resolution, threads=threads)
    if family == 'point':
        return build_point_source_locus(manifold, parameter, resolution, int(job.get('rays', 64)),
                                        job.get('t_max'), threads=threads)
    raise ConfigError(f"unknown split family '{family}'; available: constants, point, torus")


def _family_parameters(job: JobSpec):
    family = job.get('family', 'constants')
    if family == 'torus':
        return job.get('b_values', [[0.0, 0.0]])
    if family == 'point':
        return [job.get('point', [0.0, 0.0])]
    values = job.get('a_values')
    if not values:
        raise ConfigError("split-family with constants needs 'a_values'")
    return values


def run_split_family(job: JobSpec, manifold, out: Path, threads: Optional[int]) -> dict:
    members = []
    for i, parameter in enumerate(_family_parameters(job)):
        model = _build_model(job, manifold, threads, parameter)
        doc = model_to_json(model)
        if job.get('family') == 'torus':
            doc['torus_margin'] = torus_margin(manifold, parameter)
        members.append(doc)
        if _is_planar(manifold):
            render_model_svg(model, out / f"split_{i:03d}.svg")
    write_json({'family': job.get('family', 'constants'), 'members': members}, out / 'split_family.json')
    return {'members': len(members), 'histograms': [m['histogram'] for m in members]}


def run_verify_balanced(job: JobSpec, manifold, out: Path, threads: Optional[int]) -> dict:
    family = job.get('family', 'constants')
    parameter = {'torus': job.get('b', [0.0, 0.0]), 'point': job.get('point', [0.0, 0.0])}.get(family, job.get('a'))
    if parameter is None:
        raise ConfigError("verify-balanced with constants needs 'a'")
    model = _build_model(job, manifold, threads, parameter)
    balanced = verify_balanced(model, tol=float(job.get('balance_tol', 5e-3)), delta=float(job.get('delta', 1e-3)),
                               fan=int(job.get('fan', 16)))
    splits = verify_splits(model, check_resolution=int(job.get('check_resolution', 16)))
    doc = {'balanced': balanced.to_dict(), 'splits': splits.to_dict(), 'histogram': model.histogram()}
    write_json(doc, out / 'balanced.json')
    if _is_planar(manifold):
        render_model_svg(model, out / 'balanced.svg')
    return {'balanced': balanced.balanced, 'splits': splits.passed}


def run_trace_cdc(job: JobSpec, manifold, out: Path, threads: Optional[int]) -> dict:
    model = canonical_form_maps(job.get('model', 'A3'))
    if job.get('perturbation'):
        model = PerturbedMap(model, float(job.get('perturbation')))
    radial = job.get('radial', [0.0] * (model.dim - 1) + [1.0])
    family = ModelRayFamily(model, radial)
    if job.get('start') is None:
        raise ConfigError("trace-cdc needs a 'start' point")
    curve = trace_cdc(family, job.get('start'), max_length=float(job.get('max_length', 5.0)),
                      step=float(job.get('step', 1e-2)),
                      slack_threshold=float(job.get('slack_threshold', SLACK_THRESHOLD)),
                      acdc_c=Config.SLACK_C if job.get('acdc') else None)
    header, rows = cdc_rows(curve)
    write_csv(header, rows, out / 'cdc.csv')
    chart = chart_for(family)
    summary = {'stop_reason': curve.stop_reason, 'length': curve.length, 'image_length': curve.image_length,
               'unbeatable_error': curve.unbeatable_error(chart)}

    join = None
    if job.get('join') and curve.stop_reason == 'A3':
        join = a3_join(family, curve)
        write_json(join.to_dict(), out / 'join.json')
    retort = None
    if job.get('retort'):
        retort = build_retort(family, curve, join=join)
        summary['retort'] = retort_gain_gap(family, curve, retort).to_dict()
        summary['retort']['hit_conjugate'] = retort.hit_conjugate
        summary['retort']['image_mismatch'] = retort.image_mismatch
    header, rows = image_rows(curve, retort)
    write_csv(header, rows, out / 'image.csv')
    if model.dim == 2:
        lines = [curve.points] + ([retort.points] if retort is not None else [])
        render_locus_svg(out / 'cdc.svg', curve.points[[0, -1]], None, lines, [], f"CDC ({job.get('model', 'A3')})")
    return summary


def run_d4_roots(job: JobSpec, manifold, out: Path, threads: Optional[int]) -> dict:
    if job.get('kind') is None or job.get('a') is None or job.get('b') is None:
        raise ConfigError("d4-roots needs kind, a and b")
    report = d4_root_analysis(float(job.get('a')), float(job.get('b')), job.get('kind'))
    write_json(report.to_dict(), out / 'd4_roots.json')
    return {'roots': report.roots}


COMMANDS: Dict[str, Callable] = {
    'geodesic': run_geodesic,
    'conjugate-locus': run_conjugate_locus,
    'cut-locus': run_cut_locus,
    'solve-hjbvp': run_solve_hjbvp,
    'split-family': run_split_family,
    'verify-balanced': run_verify_balanced,
    'trace-cdc': run_trace_cdc,
    'd4-roots': run_d4_roots,
}


# Entry ----------------------------------------------------------------------


def _diagnostic(error: CutLocusError) -> dict:
    doc = {'error': type(error).__name__, 'message': str(error)}
    for attr in ('margin', 'depth', 'interval', 'last_sample', 'last_state'):
        value = getattr(error, attr, None)
        if value is None:
            continue
        try:
            doc[attr] = np.asarray(value, dtype=float).tolist()
        except (TypeError, ValueError):
            doc[attr] = repr(value)
    return doc


def run(job: JobSpec, out: Path, threads: Optional[int] = None) -> int:
    """
    Run one job and write its artifacts

    Args:
        job: Validated job
        out: Artifact directory
        threads: Worker threads (None = config)

    Returns:
        int: Exit status (0 ok, 2 config error, 3 numerical failure)
    """
    out.mkdir(parents=True, exist_ok=True)
    saved = (Config.SEED, Config.TOL)
    Config.SEED = job.seed
    if job.get('tol') is not None:
        Config.TOL = float(job.get('tol'))
    try:
        manifold = load_manifold(job.manifold) if job.manifold is not None else None
        summary = COMMANDS[job.command](job, manifold, out, threads)
    except ConfigError as e:
        logger.error("Configuration error: %s", e)
        return EXIT_CONFIG
    except CutLocusError as e:
        logger.error("%s: %s", type(e).__name__, e)
        write_json(_diagnostic(e), out / 'diagnostic.json')
        return EXIT_NUMERICAL
    finally:
        Config.SEED, Config.TOL = saved
    summary['command'] = job.command
    write_json(summary, out / 'summary.json')
    logger.info("%s finished; artifacts in %s", job.command, out)
    return EXIT_OK


def main(argv=None) -> int:
    parser = create_argument_parser()
    args = parser.parse_args(argv)
    setup_logging(args.verbose)

    try:
        if args.tol is not None:
            Config.TOL = args.tol
        if args.epsilon_min is not None:
            Config.EPSILON_MIN = args.epsilon_min
        Config.validate()
        if args.job is not None:
            job = JobSpec.load(args.job, args.command)
        elif args.command == 'd4-roots':
            job = JobSpec.from_dict({'command': 'd4-roots',
                                     'params': {'kind': args.kind, 'a': args.a, 'b': args.b}})
        else:
            raise ConfigError(f"{args.command} needs --job")
        if args.command == 'd4-roots':
            for key in ('kind', 'a', 'b'):
                if getattr(args, key) is not None:
                    job.params[key] = getattr(args, key)
    except ConfigError as e:
        logger.error("Configuration error: %s", e)
        return EXIT_CONFIG

    out = args.out or (Path(job.output_dir) if job.output_dir else Config.OUTPUT_DIR / sanitize_filename(args.command))
    return run(job, out, args.threads)


if __name__ == '__main__':
    sys.exit(main())
