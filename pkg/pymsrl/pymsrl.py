#!/usr/bin/env python
"""Entry point for the command line tool"""
import argparse
import json
import logging
import os
import sys

import numpy as np

from pymsrl.lib.apgd import auto_fit
from pymsrl.lib.baselines import refit
from pymsrl.lib.datagen import SimDesign
from pymsrl.lib.linalg.dataset import center_and_normalize
from pymsrl.lib.linalg.matrix import read_matrix, spectral_norm, \
    write_matrix
from pymsrl.lib.penalties import PenaltyKind, PenaltySpec
from pymsrl.lib.simulation import run_simulation, write_results
from pymsrl.lib.tuning import CorollaryConstants, corollary_lambda, \
    cross_validate, default_grid, fit_path, mc_tune
from pymsrl.lib.utils import ConfigError, DataError, MsrlError, \
    RankDeficient, resolve_threads
from pymsrl.lib.verification import kkt_residual, lemma1_check, \
    weighted_rss_identity

logger = logging.getLogger('pymsrl')

PENALTIES = [kind.value for kind in PenaltyKind]


def _write_json(path, payload):
    with open(path, 'w') as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write('\n')


def _load(args):
    """Reads the X and Y files named on the command line into a Dataset"""
    x = read_matrix(args.x, 'X')
    y = read_matrix(args.y, 'Y')
    return center_and_normalize(y, x, not getattr(args, 'no_normalize',
                                                  False))


def _safe_kkt(data, pen, b):
    """The KKT residual, or None when the residual is rank deficient"""
    try:
        return kkt_residual(data, pen, b)
    except (RankDeficient, DataError):
        return None


def cmd_fit(args):
    """Fits one lambda (given, or chosen by cross-validation) and writes
    beta.csv, intercept.csv and fit.json"""
    if args.lam is None and args.cv is None:
        raise ConfigError('either --lambda or --cv is required')
    data = _load(args)
    kind = PenaltyKind.from_name(args.penalty)

    lam = args.lam
    if lam is None:
        path = cross_validate(data, kind, folds=args.cv, seed=args.seed,
                              n_jobs=args.threads)
        lam = path.best_lambda
        logger.info('cross-validation chose lambda=%g', lam)

    pen = PenaltySpec(kind, lam)
    fit = auto_fit(data, pen, args.solver)
    b = refit(data, fit.b_hat) if args.refit else fit.b_hat

    os.makedirs(args.out, exist_ok=True)
    b_raw = data.to_raw_coefficients(b)
    write_matrix(os.path.join(args.out, 'beta.csv'), b_raw)
    write_matrix(os.path.join(args.out, 'intercept.csv'),
                 data.intercept(b_raw)[np.newaxis, :])

    report = fit.summary()
    report['refit'] = bool(args.refit)
    report['kkt_residual'] = _safe_kkt(data, pen, fit.b_hat)
    _write_json(os.path.join(args.out, 'fit.json'), report)


def cmd_path(args):
    """Fits the solution path, optionally with cross-validation"""
    data = _load(args)
    kind = PenaltyKind.from_name(args.penalty)
    lambdas = default_grid(data, kind, args.nlambda, args.min_ratio)

    if args.cv is None:
        result = fit_path(data, kind, lambdas)
    else:
        result = cross_validate(data, kind, lambdas, folds=args.cv,
                                seed=args.seed, n_jobs=args.threads)

    os.makedirs(args.out, exist_ok=True)
    result.write_path(os.path.join(args.out, 'path.csv'))
    if result.cv_mean is not None:
        result.write_cv(os.path.join(args.out, 'cv.csv'))
        _write_json(os.path.join(args.out, 'best-lambda.json'),
                    {'best_lambda': result.best_lambda,
                     'best_index': result.best_index,
                     'one_se_lambda': result.one_se_lambda})


def _parse_levels(text):
    try:
        return [float(level) for level in text.split(',') if level.strip()]
    except ValueError:
        raise ConfigError('--levels must be comma separated numbers, got %r'
                          % text)


def cmd_tune(args):
    """Computes theory-driven tuning parameters from X alone"""
    x = read_matrix(args.x, 'X')
    if args.y is not None:
        q = read_matrix(args.y, 'Y').shape[1]
    elif args.q is not None:
        q = args.q
    else:
        raise ConfigError('either --y or --q is required to know q')
    data = center_and_normalize(np.zeros((x.shape[0], q)), x)
    kind = PenaltyKind.from_name(args.penalty)

    if args.mode == 'mc':
        dist = mc_tune(data, kind, args.c, args.draws, args.seed,
                       n_jobs=args.threads)
        levels = _parse_levels(args.levels)
        report = {'mode': 'mc', 'penalty': kind.value, 'c': dist.c,
                  'draws': dist.n_draws, 'seed': args.seed,
                  'lambdas': dict(('%g' % level, dist.quantile(level))
                                  for level in levels)}
        if args.samples:
            os.makedirs(args.out, exist_ok=True)
            dist.to_csv(os.path.join(args.out, 'samples.csv'))
    else:
        overrides = dict((name, getattr(args, name))
                         for name in ('c', 'c1', 'c2', 'c3')
                         if getattr(args, name) is not None)
        consts = CorollaryConstants.defaults(**overrides)
        lam = corollary_lambda(kind, data.n, data.p, data.q, consts,
                               spectral_norm(data.x))
        report = {'mode': 'corollary', 'penalty': kind.value, 'lambda': lam,
                  'constants': {'c': consts.c, 'c1': consts.c1,
                                'c2': consts.c2, 'c3': consts.c3,
                                'c4': consts.c4}}

    os.makedirs(args.out, exist_ok=True)
    _write_json(os.path.join(args.out, 'tune.json'), report)


def cmd_simulate(args):
    """Runs the replication loop of a JSON design"""
    design = SimDesign.from_json(args.config)
    rows, summary = run_simulation(design, args.methods, args.reps,
                                   args.seed, args.draws,
                                   n_jobs=args.threads)
    write_results(args.out, design, rows, summary)


def cmd_verify(args):
    """Prints optimality and identity diagnostics of a fit as JSON"""
    data = _load(args)
    pen = PenaltySpec(args.penalty, args.lam)
    if args.beta is not None:
        b_raw = read_matrix(args.beta, 'beta')
        if b_raw.shape != (data.p, data.q):
            raise DataError('beta has shape %s but X and Y need %s'
                            % (b_raw.shape, (data.p, data.q)))
        b = data.from_raw_coefficients(b_raw)
    else:
        b = auto_fit(data, pen).b_hat

    lhs, rhs = weighted_rss_identity(data, b)
    try:
        violations = lemma1_check(data, pen, b, args.trials,
                                  args.seed).violations
    except (RankDeficient, DataError):
        violations = None

    report = {'kkt': _safe_kkt(data, pen, b),
              'identityGap': abs(lhs - rhs),
              'lemma1Violations': violations}
    text = json.dumps(report, indent=2, sort_keys=True)
    print(text)
    if args.out:
        with open(args.out, 'w') as handle:
            handle.write(text + '\n')


def _add_data_args(parser):
    parser.add_argument('--x', required=True, help='predictor matrix CSV')
    parser.add_argument('--y', required=True, help='response matrix CSV')
    parser.add_argument('--penalty', required=True, choices=PENALTIES)


def build_parser():
    """Builds the argument parser with one subcommand per task"""
    parser = argparse.ArgumentParser(
        prog='pymsrl',
        description='Multivariate square-root lasso fitting, tuning and '
                    'simulation')
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument('-v', '--verbose', action='store_true',
                           help='log solver details')
    verbosity.add_argument('-q', '--quiet', action='store_true',
                           help='only log warnings and errors')
    parser.add_argument('--threads', type=int, default=None,
                        help='worker count (default: $MSRL_THREADS or the '
                             'number of CPUs)')
    commands = parser.add_subparsers(dest='command')
    commands.required = True

    fit = commands.add_parser('fit', help='fit a single lambda')
    _add_data_args(fit)
    fit.add_argument('--lambda', dest='lam', type=float)
    fit.add_argument('--cv', type=int, help='choose lambda by K-fold CV')
    fit.add_argument('--seed', type=int, default=0)
    fit.add_argument('--solver', choices=('auto', 'admm', 'apgd'),
                     default='auto')
    fit.add_argument('--refit', action='store_true')
    fit.add_argument('--no-normalize', action='store_true')
    fit.add_argument('--out', required=True)
    fit.set_defaults(func=cmd_fit)

    path = commands.add_parser('path', help='fit the solution path')
    _add_data_args(path)
    path.add_argument('--nlambda', type=int)
    path.add_argument('--min-ratio', type=float)
    path.add_argument('--cv', type=int)
    path.add_argument('--seed', type=int, default=0)
    path.add_argument('--out', required=True)
    path.set_defaults(func=cmd_path)

    tune = commands.add_parser('tune', help='theory-driven lambda')
    tune.add_argument('--x', required=True)
    tune.add_argument('--y')
    tune.add_argument('--q', type=int)
    tune.add_argument('--penalty', required=True, choices=PENALTIES)
    tune.add_argument('--mode', choices=('mc', 'corollary'), default='mc')
    tune.add_argument('--c', type=float)
    tune.add_argument('--draws', type=int)
    tune.add_argument('--levels', default='0.5,0.75,0.85,0.95')
    tune.add_argument('--seed', type=int, default=0)
    tune.add_argument('--c1', type=float)
    tune.add_argument('--c2', type=float)
    tune.add_argument('--c3', type=float)
    tune.add_argument('--samples', action='store_true',
                      help='also write samples.csv')
    tune.add_argument('--out', required=True)
    tune.set_defaults(func=cmd_tune)

    simulate = commands.add_parser('simulate', help='run a simulation')
    simulate.add_argument('--config', required=True, help='design JSON')
    simulate.add_argument('--reps', type=int)
    simulate.add_argument('--methods', default='msr-cv,pls')
    simulate.add_argument('--seed', type=int)
    simulate.add_argument('--draws', type=int)
    simulate.add_argument('--out', required=True)
    simulate.set_defaults(func=cmd_simulate)

    verify = commands.add_parser('verify', help='check a fit')
    _add_data_args(verify)
    verify.add_argument('--lambda', dest='lam', type=float, required=True)
    verify.add_argument('--beta', help='raw-scale coefficients CSV')
    verify.add_argument('--trials', type=int, default=200)
    verify.add_argument('--seed', type=int, default=0)
    verify.add_argument('--out')
    verify.set_defaults(func=cmd_verify)
    return parser


def main(argv=None):
    """Main entry point for the command line tool

    Returns:
        the process exit code: 0 on success, 2 for usage or configuration
        errors, 3 for data errors and unwritable output, 4 for numerical
        failures
    """
    args = build_parser().parse_args(argv)

    level = logging.INFO
    if args.verbose:
        level = logging.DEBUG
    elif args.quiet:
        level = logging.WARNING
    logging.basicConfig(level=level, stream=sys.stderr,
                        format='%(levelname)s %(name)s: %(message)s')

    try:
        args.threads = resolve_threads(args.threads)
        args.func(args)
    except MsrlError as err:
        sys.stderr.write('ERROR: %s\n' % err)
        return err.exit_code
    except OSError as err:
        # Unwritable output paths
        sys.stderr.write('ERROR: cannot write output: %s\n' % err)
        return DataError.exit_code
    return 0


if __name__ == '__main__':
    sys.exit(main())
