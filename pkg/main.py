"""
cascade-lab - Main Entry Point

Subcommands:
    check      validate a model file and run the condition C heuristics
    spectral   kappa(s), alpha(s), kappa'(1-) and optionally chi
    cascade    replicas of Y_n and the one-step martingale check
    fixpoint   population-dynamics pool for the fixed point
    tail       Hill, tail constant, harmonicity and shape checks on a pool

Exit codes: 0 ok, 1 malformed model, 2 warnings, 3 condition C or
calibration failure, 4 no tail exponent, 5 work cap exceeded, 6 numerical
failure, 7 tail pipeline precondition.
"""
import argparse
import logging
import sys

import numpy as np
import pandas as pd
import logzero
from logzero import logger

import display
from artifacts import RunManifest, RunWriter, load_pool
from cascade import (CascadeConfig, fixpoint_pool, martingale_step_check, moment_probe,
                     nondegeneracy_report, simulate_replicas)
from config import Config
from ensemble import (branching_hypotheses, calibrate, check_condition_C, hypothesis_moments,
                      is_calibrated, lattice_diagnostic, load_model, mean_and_perron)
from errors import CascadeLabError, NonConstantBranching
from spectral import (build_grid, find_chi, kappa_derivative_at_one, solve_dual_spectral,
                      solve_spectral)
from streams import stream
from tail import (compare_shapes, default_directions, dual_tail_function, harmonicity_check,
                  rank_table, tail_scan)

CHECK_PRODUCTS = 256


def parse_floats(text):
    return [float(x) for x in text.split(',') if x.strip()]


def parse_directions(text, d):
    """'auto' or semicolon-separated vectors such as '1,0;1,1'."""
    if text is None or text == 'auto':
        return None
    directions = []
    for chunk in text.split(';'):
        u = np.array(parse_floats(chunk))
        if u.shape != (d,) or np.any(u < 0) or not np.any(u > 0):
            raise ValueError(f"direction '{chunk}' is not a nonzero vector of C in R^{d}")
        directions.append(u / np.linalg.norm(u))
    return directions


def build_parser():
    parser = argparse.ArgumentParser(prog='cascade-lab',
                                     description='Numerical laboratory for multidimensional Mandelbrot cascades')
    sub = parser.add_subparsers(dest='command', required=True)

    def common(p):
        p.add_argument('--model', required=True, help='model JSON file')
        p.add_argument('--seed', type=int, default=Config.SEED)
        p.add_argument('--grid', type=int, default=Config.GRID_RESOLUTION, help='grid resolution')
        p.add_argument('--out', default=Config.OUT_DIR, help='output directory')
        p.add_argument('--workers', type=int, default=None,
                       help='worker threads (default CASCADE_LAB_WORKERS or all cores)')
        p.add_argument('--force', action='store_true', help='run even if condition C checks fail')

    common(sub.add_parser('check', help='validate a model'))

    p = sub.add_parser('spectral', help='transfer operator spectrum')
    common(p)
    p.add_argument('--s', default='0.5,1,1.5,2', help='comma-separated exponents')
    p.add_argument('--chi', action='store_true', help='also solve kappa(chi) E[N] = 1')
    p.add_argument('--s-max', type=float, default=Config.S_MAX)

    p = sub.add_parser('cascade', help='cascade martingale replicas')
    common(p)
    p.add_argument('--depth', type=int, default=8)
    p.add_argument('--replicas', type=int, default=10_000)

    p = sub.add_parser('fixpoint', help='population dynamics pool')
    common(p)
    p.add_argument('--pool-size', type=int, default=100_000)
    p.add_argument('--generations', type=int, default=60)
    p.add_argument('--s', default=None, help='exponents for the moment probe')

    p = sub.add_parser('tail', help='heavy-tail diagnostics on a pool')
    common(p)
    p.add_argument('--pool', default=None, help='pool snapshot; built from the model if omitted')
    p.add_argument('--pool-size', type=int, default=1_000_000)
    p.add_argument('--generations', type=int, default=80)
    p.add_argument('--directions', default='auto')
    p.add_argument('--s-max', type=float, default=Config.S_MAX)
    return parser


def _manifest(args, ensemble, **parameters):
    return RunManifest(
        command=args.command,
        model_hash=ensemble.fingerprint(),
        seed=args.seed,
        grid_resolution=args.grid,
        workers=args.workers,
        parameters=parameters,
    )


def _calibrated(ensemble):
    if is_calibrated(ensemble):
        return ensemble
    return calibrate(ensemble)


def _require_condition_C(args, ensemble):
    """Return an exit code when the model fails the checks and --force is absent."""
    report = check_condition_C(ensemble, CHECK_PRODUCTS, stream(args.seed, 'check'))
    if report.verdict or args.force:
        return None
    print(f"❌ '{ensemble.name}' fails condition C: {'; '.join(report.failures)} (use --force)")
    return 3


def cmd_check(args):
    ensemble = load_model(args.model)
    rng = stream(args.seed, 'check')
    condition = check_condition_C(ensemble, CHECK_PRODUCTS, rng)
    perron = mean_and_perron(ensemble)
    product = perron.radius * ensemble.branching.mean
    moments = [hypothesis_moments(ensemble, s) for s in (1.0, 2.0)]
    branching = branching_hypotheses(ensemble, perron)
    lattice = lattice_diagnostic(ensemble, CHECK_PRODUCTS, stream(args.seed, 'lattice'))

    display.display_check_report(ensemble, condition, product, moments, branching, lattice)
    if not condition.verdict:
        exit_code = 3
    elif (abs(product - 1.0) > 1e-10 or lattice.warning or not branching.passed
          or not all(m.finite for m in moments) or not moments[0].all_invertible):
        exit_code = 2
    else:
        exit_code = 0

    with RunWriter(args.out, _manifest(args, ensemble)) as run:
        run.write_json('check.json', {
            'model': ensemble.name,
            'condition_C': condition.to_dict(),
            'calibration_product': product,
            'moments': [m.to_dict() for m in moments],
            'branching': branching.to_dict(),
            'lattice': lattice.to_dict(),
            'exit_code': exit_code,
        })
    display.display_check_verdict(exit_code)
    return exit_code


def cmd_spectral(args):
    ensemble = load_model(args.model)
    refused = _require_condition_C(args, ensemble)
    if refused:
        return refused
    ensemble = _calibrated(ensemble)
    perron = mean_and_perron(ensemble)
    grid = build_grid(ensemble.dimension, args.grid)
    s_list = parse_floats(args.s)

    manifest = _manifest(args, ensemble, s=s_list, chi=args.chi, s_max=args.s_max)
    with RunWriter(args.out, manifest) as run:
        results = [solve_spectral(ensemble, s, grid) for s in s_list]
        run.write_csv('kappa_curve.csv', pd.DataFrame([r.to_row() for r in results]))
        e_grid = pd.DataFrame(grid.points, columns=[f'x{i}' for i in range(ensemble.dimension)])
        for r in results:
            e_grid[f'e_{r.s:g}'] = r.e_s
            e_grid[f'pi_{r.s:g}'] = r.pi_s
        run.write_csv('e_s.csv', e_grid)

        derivative = kappa_derivative_at_one(ensemble, grid, perron)
        payload = {
            'kappa_one': derivative.kappa_one,
            'r_m': perron.radius,
            'kappa_one_relative_gap': abs(derivative.kappa_one - perron.radius) / perron.radius,
            'derivative': derivative.to_dict(),
        }
        chi_solution = None
        if args.chi:
            chi_solution = find_chi(ensemble, args.s_max, grid)
            payload['chi'] = chi_solution.to_dict()
        run.write_json('chi.json', payload)

    display.display_spectral_summary(perron, results, derivative, chi_solution)
    return 0


def cmd_cascade(args):
    ensemble = _calibrated(load_model(args.model))
    config = CascadeConfig(ensemble=ensemble, depth=args.depth, replicas=args.replicas, seed=args.seed)
    manifest = _manifest(args, ensemble, depth=args.depth, replicas=args.replicas)
    with RunWriter(args.out, manifest) as run:
        samples = simulate_replicas(config, workers=args.workers)
        martingale = martingale_step_check(config, R=min(args.replicas, 200))
        frame = pd.DataFrame(samples, columns=[f'y{i}' for i in range(ensemble.dimension)])
        run.write_csv('cascade_replicas.csv', frame)
        run.write_json('cascade.json', {
            'v': config.v,
            'mean': samples.mean(axis=0),
            'stderr': samples.std(axis=0, ddof=1) / np.sqrt(len(samples)) if len(samples) > 1 else None,
            'martingale': martingale.to_dict(),
        })
    display.display_cascade_summary(config.v, samples, martingale)
    return 0


def cmd_fixpoint(args):
    ensemble = _calibrated(load_model(args.model))
    perron = mean_and_perron(ensemble)
    grid = build_grid(ensemble.dimension, args.grid)
    derivative = kappa_derivative_at_one(ensemble, grid, perron)
    s_list = parse_floats(args.s) if args.s else [1.0]

    manifest = _manifest(args, ensemble, pool_size=args.pool_size,
                         generations=args.generations, s=s_list)
    with RunWriter(args.out, manifest) as run:
        pool = fixpoint_pool(ensemble, args.pool_size, args.generations, args.seed,
                             workers=args.workers, perron=perron, kappa_slope=derivative.fd_form)
        run.write_pool('pool.txt', pool)
        run.write_csv('fixpoint_diagnostics.csv', pd.DataFrame([h.to_row() for h in pool.history]))

        report = nondegeneracy_report(ensemble, pool, derivative, perron)
        moments = []
        if pool.size >= Config.MIN_MOMENT_POOL:
            moments = moment_probe(pool, s_list, ensemble, grid)
        else:
            logger.warning("pool too small for the moment probe; skipped")
        run.write_json('fixpoint.json', {
            'nondegeneracy': report.to_dict(),
            'moments': [m.to_dict() for m in moments],
            'derivative': derivative.to_dict(),
        })
    display.display_fixpoint_summary(pool, perron.v, report, moments)
    return 0


def cmd_tail(args):
    ensemble = _calibrated(load_model(args.model))
    perron = mean_and_perron(ensemble)
    grid = build_grid(ensemble.dimension, args.grid)
    if not ensemble.branching.is_constant:
        raise NonConstantBranching("tail runs need a constant number of children")
    moments = hypothesis_moments(ensemble, 1.0)
    if not moments.all_invertible:
        logger.warning("singular atoms: the tail theorem's hyperplane hypothesis is unverified")

    directions = parse_directions(args.directions, ensemble.dimension) or default_directions(perron)
    manifest = _manifest(args, ensemble, pool=args.pool, pool_size=args.pool_size,
                         generations=args.generations, directions=[u.tolist() for u in directions],
                         s_max=args.s_max)
    with RunWriter(args.out, manifest) as run:
        chi_solution = find_chi(ensemble, args.s_max, grid)
        chi = chi_solution.chi
        dual = solve_dual_spectral(ensemble, chi, grid)

        if args.pool:
            pool = load_pool(args.pool)
            if pool.ensemble_hash != ensemble.fingerprint():
                logger.warning(f"pool was built from model {pool.ensemble_hash}, "
                               f"not {ensemble.fingerprint()}")
        else:
            pool = fixpoint_pool(ensemble, args.pool_size, args.generations, args.seed,
                                 workers=args.workers, perron=perron)
            run.write_pool('pool.txt', pool)

        reports = [tail_scan(pool, u, chi_spectral=chi, branching=ensemble.branching,
                             seed=args.seed, workers=args.workers) for u in directions]
        harmonicity = harmonicity_check(pool, ensemble, chi, directions)
        exact = harmonicity_check(pool, ensemble, chi, directions, tail_function=dual_tail_function(dual))
        for report, row in zip(reports, harmonicity):
            report.harmonicity_ratio = row.ratio
        shape = compare_shapes(reports, dual) if len(reports) >= 5 else None

        ranks = rank_table(pool.projections(directions[0]))
        for i, u in enumerate(directions[1:], start=1):
            ranks[f'value_u{i}'] = np.sort(pool.projections(u))[::-1]
        run.write_csv('ranks.csv', ranks)
        run.write_json('tail_report.json', {
            'chi': chi_solution.to_dict(),
            'dual_kappa_gap': dual.kappa_gap,
            'reports': [r.to_dict() for r in reports],
            'harmonicity': [row.to_dict() for row in harmonicity],
            'harmonicity_dual_eigenfunction': [row.to_dict() for row in exact],
            'shape': shape.to_dict() if shape else None,
            'all_invertible': moments.all_invertible,
        })
    display.display_tail_summary(reports, chi, harmonicity, shape)
    return 0


COMMANDS = {
    'check': cmd_check,
    'spectral': cmd_spectral,
    'cascade': cmd_cascade,
    'fixpoint': cmd_fixpoint,
    'tail': cmd_tail,
}


def main(argv=None):
    """Parse arguments, run one subcommand and return its exit code."""
    args = build_parser().parse_args(argv)
    logzero.loglevel(getattr(logging, str(Config.LOG_LEVEL).upper(), logging.INFO))
    if args.workers is None:
        args.workers = Config.WORKERS

    try:
        Config.validate()
        return COMMANDS[args.command](args)
    except CascadeLabError as e:
        print(f"❌ Error: {e}")
        return e.exit_code
    except FileNotFoundError as e:
        print(f"❌ Error: {e}")
        return 1
    except ValueError as e:
        print(f"❌ Error: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
