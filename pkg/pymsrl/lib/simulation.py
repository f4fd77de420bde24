"""
The replication harness: generates instances of a design, fits every
requested method and scores it
"""
import csv
import json
import logging
import os
import time

import numpy as np
from joblib import Parallel, delayed

from pymsrl.lib.apgd import auto_fit, hybrid_path_fit
from pymsrl.lib.baselines import calibrated_path, pls_path, refit, \
    response_column
from pymsrl.lib.datagen import Metrics, evaluate, simulate
from pymsrl.lib.linalg.matrix import spectral_norm
from pymsrl.lib.penalties import PenaltyKind, PenaltySpec
from pymsrl.lib.tuning import corollary_lambda, default_grid, mc_tune, \
    oracle_lambda, quantile, validation_select
from pymsrl.lib.utils import ConfigError, derive_seeds, resolve_threads, \
    standard_error

logger = logging.getLogger(__name__)

REFIT_SUFFIX = '-rf'

METRICS_COLUMNS = ('rep', 'method', 'lambda') + Metrics.FIELDS + ('seconds',)

QUANTILE_METHODS = {
    'msr-q50': 0.50,
    'msr-q75': 0.75,
    'msr-q85': 0.85,
    'msr-q95': 0.95,
}


class Replication(object):
    """Everything the methods of one replication share

    Attributes:
        instance: the SimInstance
        kind: the PenaltyKind fitted
        nlambda: grid size for validation-tuned methods
        n_draws: Monte-Carlo draws for the quantile methods
        cache: results reused across methods (the Monte-Carlo sample)
    """
    def __init__(self, instance, kind, nlambda, n_draws, seed):
        self.instance = instance
        self.kind = kind
        self.nlambda = nlambda
        self.n_draws = n_draws
        self.seed = seed
        self.cache = {}

    @property
    def data(self):
        return self.instance.data


def _msr_cv(rep):
    data, inst = rep.data, rep.instance
    lambdas = default_grid(data, rep.kind, rep.nlambda)
    fits = hybrid_path_fit(data, rep.kind, lambdas)
    _, best = validation_select(data, fits, inst.y_val, inst.x_val)
    return fits[best].b_hat, float(lambdas[best])


def _fit_at(rep, lam):
    return auto_fit(rep.data, PenaltySpec(rep.kind, lam)).b_hat, float(lam)


def _quantile_method(level):
    def method(rep):
        if 'tune' not in rep.cache:
            rep.cache['tune'] = mc_tune(rep.data, rep.kind,
                                        n_draws=rep.n_draws, seed=rep.seed,
                                        n_jobs=1)
        return _fit_at(rep, quantile(rep.cache['tune'], level))
    return method


def _msr_cor(rep):
    data = rep.data
    lam = corollary_lambda(rep.kind, data.n, data.p, data.q,
                           x_spectral_norm=spectral_norm(data.x))
    return _fit_at(rep, lam)


def _msr_opt(rep):
    return _fit_at(rep, oracle_lambda(rep.data, rep.instance.errors,
                                      rep.kind))


def _pls(rep):
    data, inst = rep.data, rep.instance
    lambdas, fits = pls_path(data, rep.kind, nlambda=rep.nlambda)
    _, best = validation_select(data, fits, inst.y_val, inst.x_val)
    return fits[best].b_hat, float(lambdas[best])


def _pls_q(rep):
    """Penalized least squares with its own validation-tuned lambda for
    every response"""
    if rep.kind is not PenaltyKind.L1:
        raise ConfigError('pls-q needs the separable lasso penalty')
    data, inst = rep.data, rep.instance
    columns = []
    for k in range(data.q):
        column = response_column(data, k)
        _, fits = pls_path(column, rep.kind, nlambda=rep.nlambda)
        _, best = validation_select(column, fits, inst.y_val[:, k:k + 1],
                                    inst.x_val)
        columns.append(fits[best].b_hat)
    return np.hstack(columns), float('nan')


def _calibrated(rep):
    data, inst = rep.data, rep.instance
    lambdas, fits = calibrated_path(data, rep.kind, nlambda=rep.nlambda,
                                    n_jobs=1)
    _, best = validation_select(data, fits, inst.y_val, inst.x_val)
    return fits[best].b_hat, float(lambdas[best])


METHODS = {
    'msr-cv': _msr_cv,
    'msr-cor': _msr_cor,
    'msr-opt': _msr_opt,
    'pls': _pls,
    'pls-q': _pls_q,
    'calibrated': _calibrated,
}
METHODS.update((name, _quantile_method(level))
               for name, level in QUANTILE_METHODS.items())


def parse_methods(names):
    """Validates a list (or comma separated string) of method names

    Any name may carry the '-rf' suffix to refit its estimate.

    Raises:
        ConfigError: for an unknown name, listing the valid ones
    """
    if isinstance(names, str):
        names = [name.strip() for name in names.split(',') if name.strip()]
    if not names:
        raise ConfigError('no methods requested')
    for name in names:
        base = name[:-len(REFIT_SUFFIX)] if name.endswith(REFIT_SUFFIX) \
            else name
        if base not in METHODS:
            raise ConfigError('unknown method %r (valid: %s, each optionally '
                              'with suffix %s)'
                              % (name, ', '.join(sorted(METHODS)),
                                 REFIT_SUFFIX))
    return list(names)


def run_method(rep, name):
    """Fits one named method on a replication

    Returns:
        a tuple (coefficients on the training scale, selected lambda)
    """
    do_refit = name.endswith(REFIT_SUFFIX)
    base = name[:-len(REFIT_SUFFIX)] if do_refit else name
    b, lam = METHODS[base](rep)
    if do_refit:
        b = refit(rep.data, b)
    return b, lam


def run_replication(design, index, seed, methods, n_draws=None):
    """Generates and scores one replication

    Returns:
        a list of metric rows, wall time included
    """
    instance = simulate(design, seed)
    rep = Replication(instance, design.penalty, design.nlambda, n_draws, seed)
    rows = []
    for name in methods:
        start = time.perf_counter()
        b, lam = run_method(rep, name)
        elapsed = time.perf_counter() - start

        metrics = evaluate(b, instance)
        row = {'rep': index, 'method': name, 'lambda': lam}
        row.update(metrics.as_dict())
        row['seconds'] = elapsed
        rows.append(row)
        logger.debug('rep %d %s: frob %.4g in %.2fs', index, name,
                     metrics.frob_sq_error, elapsed)
    return rows


def summarize(rows, methods):
    """Mean and standard error of every metric per method, in the order
    the methods were requested"""
    summary = {}
    for name in methods:
        mine = [row for row in rows if row['method'] == name]
        entry = {'reps': len(mine)}
        for field in Metrics.FIELDS:
            values = [row[field] for row in mine]
            entry[field] = {'mean': float(np.mean(values)),
                            'se': standard_error(values)}
        summary[name] = entry
    return summary


def run_simulation(design, methods, reps=None, seed=None, n_draws=None,
                   n_jobs=None):
    """Runs the replication loop

    Replication i uses the i-th seed derived from the master seed, so the
    results do not depend on how replications are scheduled.

    Args:
        design: the SimDesign
        methods: method names (see parse_methods)
        reps: overrides design.reps
        seed: overrides design.seed
        n_draws: Monte-Carlo draws for the quantile methods
        n_jobs: worker count
    Returns:
        a tuple (metric rows, summary dict)
    """
    methods = parse_methods(methods)
    reps = design.reps if reps is None else int(reps)
    if reps < 1:
        raise ConfigError('reps must be positive')
    seeds = derive_seeds(design.seed if seed is None else seed, reps)

    logger.info('running %d replications of %d methods', reps, len(methods))
    results = Parallel(n_jobs=resolve_threads(n_jobs))(
        delayed(run_replication)(design, i, seeds[i], methods, n_draws)
        for i in range(reps))

    rows = [row for rep_rows in results for row in rep_rows]
    return rows, summarize(rows, methods)


def _write_csv(path, fields, rows):
    with open(path, 'w', newline='') as handle:
        writer = csv.writer(handle)
        writer.writerow(fields)
        for row in rows:
            writer.writerow([repr(float(row[f])) if isinstance(row[f], float)
                             else row[f] for f in fields])


def write_results(out_dir, design, rows, summary):
    """Writes metrics.csv and summary.json into out_dir

    The summary leaves out wall times, so summary.json is identical across
    runs with the same seed; metrics.csv differs only in its seconds
    column.
    """
    os.makedirs(out_dir, exist_ok=True)
    _write_csv(os.path.join(out_dir, 'metrics.csv'),
               METRICS_COLUMNS, rows)
    with open(os.path.join(out_dir, 'summary.json'), 'w') as handle:
        json.dump({'design': design.to_dict(), 'methods': summary}, handle,
                  indent=2, sort_keys=True)
        handle.write('\n')
