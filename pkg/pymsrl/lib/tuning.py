"""
Tuning parameter selection: Monte-Carlo quantiles of the pivotal
statistic, the closed-form choices, solution paths and cross-validation
"""
import csv
import logging

import numpy as np
from joblib import Parallel, delayed

from pymsrl.lib import config
from pymsrl.lib.apgd import hybrid_path_fit
from pymsrl.lib.linalg.matrix import thin_svd
from pymsrl.lib.penalties import PenaltyKind, dual_norm
from pymsrl.lib.utils import ConfigError, DataError, derive_seeds, \
    make_rng, resolve_threads, standard_error

logger = logging.getLogger(__name__)

# Singular directions of Y below this fraction of the largest are ignored
DIRECTION_TOL = 1e-10

# Residual rank reported along a solution path
PATH_RANK_TOL = 1e-8


def sample_stiefel_uniform(n, q, rng):
    """Draws a matrix uniformly from the n x q matrices with orthonormal
    columns

    Args:
        n: number of rows
        q: number of columns, 1 <= q <= n
        rng: a numpy Generator
    Returns:
        U V' from the thin SVD of an n x q standard normal matrix
    Raises:
        DataError: if q < 1 or n < q
    """
    if q < 1 or n < q:
        raise DataError('uniform sampling on O(n, q) needs n >= q >= 1 '
                        '(n=%d, q=%d)' % (n, q))
    z = rng.standard_normal((n, q))
    return thin_svd(z).polar()


class TuneDistribution(object):
    """Monte-Carlo draws of the pivotal statistic (c/sqrt(n)) g~(X'O)

    Attributes:
        samples: the draws, in the order they were generated
        c: the multiplier
        kind: the PenaltyKind whose dual norm was used
        n_draws: number of draws
        seed: the master seed
    """
    def __init__(self, samples, c, kind, n_draws, seed):
        self.samples = np.asarray(samples, dtype=float)
        self.c = c
        self.kind = kind
        self.n_draws = n_draws
        self.seed = seed
        self._sorted = np.sort(self.samples)

    def quantile(self, level):
        return quantile(self, level)

    def to_csv(self, path):
        """Writes one sample per line"""
        np.savetxt(path, self.samples, fmt='%.17g')


def _draw_block(x, q, kind, c, size, seed):
    """Draws one block of the pivotal statistic from its own stream"""
    rng = make_rng(seed)
    n = x.shape[0]
    scale = c / np.sqrt(n)
    out = np.empty(size)
    for i in range(size):
        o = sample_stiefel_uniform(n, q, rng)
        out[i] = scale * dual_norm(kind, x.T.dot(o))
    return out


def mc_tune(data, kind, c=None, n_draws=None, seed=0, n_jobs=None):
    """Samples the pivotal statistic that calibrates lambda

    Only the predictors and the number of responses enter; the responses
    and hence the error covariance never do. Draws are split into fixed
    blocks, each with a stream derived from (seed, block index), so the
    result does not depend on the number of workers.

    Args:
        data: the Dataset (its x and q are used)
        kind: the PenaltyKind
        c: the multiplier, > 1
        n_draws: number of draws
        seed: master seed
        n_jobs: worker count (see utils.resolve_threads)
    Returns:
        a TuneDistribution
    Raises:
        ConfigError: if c <= 1 or n_draws < 1
        DataError: if n < q
    """
    settings = config.section('tuning')
    c = settings['c'] if c is None else float(c)
    n_draws = settings['n_draws'] if n_draws is None else int(n_draws)
    block_size = settings['block_size']
    kind = PenaltyKind.from_name(kind)

    if c <= 1.0:
        raise ConfigError('c must exceed 1, got %r' % c)
    if n_draws < 1:
        raise ConfigError('the number of draws must be positive')
    if data.n < data.q:
        raise DataError('Monte-Carlo tuning draws from O(n, q), which needs '
                        'n >= q (n=%d, q=%d)' % (data.n, data.q))

    sizes = [block_size] * (n_draws // block_size)
    if n_draws % block_size:
        sizes.append(n_draws % block_size)
    seeds = derive_seeds(seed, len(sizes))

    logger.debug('drawing %d samples in %d blocks', n_draws, len(sizes))
    blocks = Parallel(n_jobs=resolve_threads(n_jobs))(
        delayed(_draw_block)(data.x, data.q, kind, c, size, block_seed)
        for size, block_seed in zip(sizes, seeds))
    return TuneDistribution(np.concatenate(blocks), c, kind, n_draws, seed)


def quantile(dist, level):
    """Empirical quantile of a TuneDistribution, interpolating linearly
    between order statistics

    Raises:
        ConfigError: if level is not in (0, 1)
    """
    level = float(level)
    if not 0.0 < level < 1.0:
        raise ConfigError('quantile level must lie in (0, 1), got %r' % level)
    if dist.samples.size == 0:
        raise DataError('cannot take a quantile of an empty sample')
    return float(np.quantile(dist._sorted, level))


class CorollaryConstants(object):
    """Constants of the closed-form lambda choices

    Attributes:
        c, c1, c2, c3: constants, each > 1
        c4: 4 log(7 + c3)
    """
    def __init__(self, c=1.01, c1=1.01, c2=2.0, c3=1.01):
        self.c = float(c)
        self.c1 = float(c1)
        self.c2 = float(c2)
        self.c3 = float(c3)
        for name in ('c', 'c1', 'c2', 'c3'):
            if getattr(self, name) <= 1.0:
                raise ConfigError('%s must exceed 1, got %r'
                                  % (name, getattr(self, name)))

    @property
    def c4(self):
        return 4.0 * np.log(7.0 + self.c3)

    @classmethod
    def defaults(cls, **overrides):
        settings = config.section('corollary')
        settings.update(overrides)
        return cls(**settings)


def corollary_lambda(kind, n, p, q, consts=None, x_spectral_norm=None):
    """Closed-form tuning parameter for each penalty

    lasso:   c sqrt(2 c1 log(2pq) / (n - 1)), needs n > 2 c1 log(2pq) + 1
    group:   c sqrt(4 c2 log(p) / (n - 2)) + c sqrt(q / n), needs
             (sqrt(2) - 1) sqrt(2 c2 log p) > sqrt(pi)
    nuclear: 4 c n^(-1/2) ||X|| [sqrt(c4 (p + q) / (n - 2)) + n^(-1/2)],
             needs (sqrt(2) - 1) ||X|| sqrt(2 log(7 + c3) (p + q))
             > sqrt(n pi)

    Args:
        kind: the PenaltyKind
        n, p, q: problem dimensions
        consts: CorollaryConstants (packaged defaults if None)
        x_spectral_norm: ||X||, required for the nuclear penalty
    Returns:
        the tuning parameter
    Raises:
        ConfigError: if a constant constraint fails
        DataError: if the sample size is too small for the formula
    """
    kind = PenaltyKind.from_name(kind)
    consts = consts or CorollaryConstants.defaults()
    c = consts.c

    if kind is PenaltyKind.L1:
        bound = 2.0 * consts.c1 * np.log(2.0 * p * q) + 1.0
        if n <= bound:
            raise DataError('the lasso closed form needs n > 2 c1 log(2pq) '
                            '+ 1 = %.4g, got n=%d' % (bound, n))
        return float(c * np.sqrt(2.0 * consts.c1 * np.log(2.0 * p * q) /
                                 (n - 1.0)))

    if n <= 2:
        raise DataError('the closed forms for group and nuclear penalties '
                        'need n > 2, got n=%d' % n)

    if kind is PenaltyKind.GROUP:
        lhs = (np.sqrt(2.0) - 1.0) * np.sqrt(2.0 * consts.c2 *
                                             np.log(max(p, 1)))
        if not lhs > np.sqrt(np.pi):
            raise ConfigError('the group closed form needs (sqrt(2) - 1) '
                              'sqrt(2 c2 log p) > sqrt(pi); got %.4g <= %.4g '
                              'with c2=%g, p=%d; increase c2'
                              % (lhs, np.sqrt(np.pi), consts.c2, p))
        return float(c * np.sqrt(4.0 * consts.c2 * np.log(p) / (n - 2.0)) +
                     c * np.sqrt(q / float(n)))

    if x_spectral_norm is None:
        raise ConfigError('the nuclear closed form needs the spectral norm '
                          'of X')
    lhs = ((np.sqrt(2.0) - 1.0) * x_spectral_norm *
           np.sqrt(2.0 * np.log(7.0 + consts.c3) * (p + q)))
    if not lhs > np.sqrt(n * np.pi):
        raise ConfigError('the nuclear closed form needs (sqrt(2) - 1) ||X|| '
                          'sqrt(2 log(7 + c3)(p + q)) > sqrt(n pi); got '
                          '%.4g <= %.4g' % (lhs, np.sqrt(n * np.pi)))
    return float(4.0 * c * x_spectral_norm / np.sqrt(n) *
                 (np.sqrt(consts.c4 * (p + q) / (n - 2.0)) +
                  1.0 / np.sqrt(n)))


def lambda_max(data, kind):
    """Smallest lambda at which the zero matrix satisfies the first-order
    conditions: (1/sqrt(n)) g~(X' U_Y V_Y')

    Only singular directions of Y with non-zero singular values are used,
    and Y = 0 gives 0.
    """
    kind = PenaltyKind.from_name(kind)
    svd = thin_svd(data.y)
    if svd.d.size == 0 or svd.d[0] <= 0.0:
        return 0.0
    return dual_norm(kind, data.x.T.dot(svd.polar(DIRECTION_TOL))) / \
        np.sqrt(data.n)


def lambda_grid(lam_max, nlambda=None, min_ratio=None):
    """Log-spaced descending grid from lam_max to min_ratio * lam_max

    Raises:
        ConfigError: if lam_max is not positive, nlambda < 1 or min_ratio
            is outside (0, 1)
    """
    settings = config.section('path')
    nlambda = settings['nlambda'] if nlambda is None else int(nlambda)
    min_ratio = settings['min_ratio'] if min_ratio is None else \
        float(min_ratio)

    if not lam_max > 0.0:
        raise ConfigError('lambda_max must be positive to build a grid, got '
                          '%r' % lam_max)
    if nlambda < 1:
        raise ConfigError('nlambda must be positive, got %d' % nlambda)
    if not 0.0 < min_ratio < 1.0:
        raise ConfigError('min_ratio must lie in (0, 1), got %r' % min_ratio)

    grid = np.geomspace(lam_max, lam_max * min_ratio, nlambda)
    grid[0] = lam_max
    return grid


class PathResult(object):
    """A solution path with optional cross-validation errors

    Attributes:
        lambdas: descending grid
        fits: one FitResult per lambda
        residual_ranks: numerical rank of the residual at each fit
        cv_mean: per-lambda mean held-out squared prediction error, or None
        cv_se: per-lambda standard error of cv_mean, or None
        fold_errors: the (folds x lambdas) error matrix, or None
    """
    def __init__(self, lambdas, fits, residual_ranks, cv_mean=None,
                 cv_se=None, fold_errors=None):
        self.lambdas = np.asarray(lambdas, dtype=float)
        self.fits = fits
        self.residual_ranks = residual_ranks
        self.cv_mean = cv_mean
        self.cv_se = cv_se
        self.fold_errors = fold_errors

    @property
    def best_index(self):
        if self.cv_mean is None:
            return None
        return int(np.argmin(self.cv_mean))

    @property
    def best_lambda(self):
        index = self.best_index
        return None if index is None else float(self.lambdas[index])

    @property
    def one_se_lambda(self):
        """Largest lambda whose mean error is within one standard error of
        the minimum"""
        index = self.best_index
        if index is None:
            return None
        limit = self.cv_mean[index] + self.cv_se[index]
        within = np.nonzero(self.cv_mean <= limit)[0]
        return float(self.lambdas[within[0]])

    def write_path(self, path):
        """Writes lambda, objective, nonzeros, solver and residual rank per
        grid point"""
        with open(path, 'w', newline='') as handle:
            writer = csv.writer(handle)
            writer.writerow(['lambda', 'objective', 'nonzeros', 'solver',
                             'residual_rank'])
            for lam, fit, rank in zip(self.lambdas, self.fits,
                                      self.residual_ranks):
                writer.writerow([repr(float(lam)), repr(float(fit.objective)),
                                 fit.nonzeros, fit.solver, rank])

    def write_cv(self, path):
        """Writes lambda, mean error and standard error per grid point"""
        with open(path, 'w', newline='') as handle:
            writer = csv.writer(handle)
            writer.writerow(['lambda', 'mean_error', 'standard_error'])
            for lam, mean, se in zip(self.lambdas, self.cv_mean, self.cv_se):
                writer.writerow([repr(float(lam)), repr(float(mean)),
                                 repr(float(se))])


def _residual_ranks(data, fits):
    return [thin_svd(data.y - data.x.dot(fit.b_hat)).rank(PATH_RANK_TOL)
            for fit in fits]


def default_grid(data, kind, nlambda=None, min_ratio=None):
    """The default grid from lambda_max down

    Raises:
        DataError: if the responses are constant, so lambda_max is zero
    """
    lam_max = lambda_max(data, kind)
    if lam_max <= 0.0:
        raise DataError('responses are constant; every lambda gives the '
                        'zero solution')
    return lambda_grid(lam_max, nlambda, min_ratio)


def fit_path(data, kind, lambdas=None, nlambda=None, min_ratio=None,
             cfg_admm=None, cfg_apgd=None):
    """Fits the solution path over a descending grid

    Args:
        data: the Dataset
        kind: the PenaltyKind
        lambdas: the grid, or None for the default grid
        nlambda, min_ratio: default grid shape
        cfg_admm, cfg_apgd: solver configs
    Returns:
        a PathResult without cross-validation errors
    """
    kind = PenaltyKind.from_name(kind)
    if lambdas is None:
        lambdas = default_grid(data, kind, nlambda, min_ratio)
    fits = hybrid_path_fit(data, kind, lambdas, cfg_admm, cfg_apgd)
    return PathResult(lambdas, fits, _residual_ranks(data, fits))


def prediction_errors(train, fits, y_raw, x_raw):
    """Mean squared prediction error of every fit on new raw rows

    Args:
        train: the Dataset the fits were computed on
        fits: a list of FitResult
        y_raw, x_raw: held-out responses and predictors on the raw scale
    Returns:
        an array with one error per fit, averaged over observations and
        responses
    """
    return np.array([np.mean((y_raw - train.predict(fit.b_hat, x_raw)) ** 2)
                     for fit in fits])


def _fold_errors(data, kind, lambdas, train_index, test_index, cfg_admm,
                 cfg_apgd):
    train = data.rows(train_index)
    fits = hybrid_path_fit(train, kind, lambdas, cfg_admm, cfg_apgd)
    return prediction_errors(train, fits, data.y[test_index],
                             data.x[test_index])


def assign_folds(n, folds, seed):
    """Random balanced fold labels 0..folds-1, deterministic given seed"""
    rng = make_rng(seed)
    labels = np.empty(n, dtype=int)
    labels[rng.permutation(n)] = np.arange(n) % folds
    return labels


def cross_validate(data, kind, lambdas=None, folds=None, seed=0,
                   cfg_admm=None, cfg_apgd=None, fold_ids=None, n_jobs=None):
    """K-fold cross-validation of the solution path

    Each training part is re-centered and re-normalized on its own rows;
    the held-out part is predicted with the training means and scales.

    Args:
        data: the Dataset
        kind: the PenaltyKind
        lambdas: descending grid (default grid if None)
        folds: number of folds K >= 2
        seed: fold assignment seed
        cfg_admm, cfg_apgd: solver configs
        fold_ids: explicit fold labels, overriding folds and seed
        n_jobs: worker count
    Returns:
        a PathResult with the full-data path and the CV errors
    Raises:
        ConfigError: if K < 2
        DataError: if n < 2K or a fold has fewer than 2 rows
    """
    kind = PenaltyKind.from_name(kind)
    if lambdas is None:
        lambdas = default_grid(data, kind)
    lambdas = np.asarray(lambdas, dtype=float)

    if fold_ids is None:
        folds = config.section('cv')['folds'] if folds is None else \
            int(folds)
        if folds < 2:
            raise ConfigError('cross-validation needs at least 2 folds, got '
                              '%d' % folds)
        if data.n < 2 * folds:
            raise DataError('%d-fold cross-validation needs n >= %d, got '
                            'n=%d' % (folds, 2 * folds, data.n))
        fold_ids = assign_folds(data.n, folds, seed)
    fold_ids = np.asarray(fold_ids)
    labels = np.unique(fold_ids)
    if labels.size < 2:
        raise ConfigError('cross-validation needs at least 2 folds')
    for label in labels:
        size = int(np.sum(fold_ids == label))
        if size < 2 or data.n - size < 2:
            raise DataError('fold %s has %d rows; every fold and its '
                            'complement need at least 2' % (label, size))

    logger.info('cross-validating %d lambdas over %d folds', lambdas.size,
                labels.size)
    errors = Parallel(n_jobs=resolve_threads(n_jobs))(
        delayed(_fold_errors)(data, kind, lambdas,
                              np.nonzero(fold_ids != label)[0],
                              np.nonzero(fold_ids == label)[0],
                              cfg_admm, cfg_apgd)
        for label in labels)
    errors = np.vstack(errors)

    mean = errors.mean(axis=0)
    se = np.array([standard_error(errors[:, j])
                   for j in range(errors.shape[1])])

    result = fit_path(data, kind, lambdas, cfg_admm=cfg_admm,
                      cfg_apgd=cfg_apgd)
    result.cv_mean = mean
    result.cv_se = se
    result.fold_errors = errors
    return result


def validation_select(train, fits, y_val_raw, x_val_raw):
    """Picks the fit with the smallest squared prediction error on an
    independent validation set

    Args:
        train: the training Dataset
        fits: a list of FitResult along a path
        y_val_raw, x_val_raw: the validation set on the raw scale
    Returns:
        a tuple (errors, best index)
    """
    errors = prediction_errors(train, fits, y_val_raw, x_val_raw)
    return errors, int(np.argmin(errors))


def oracle_lambda(data, errors, kind, c=None):
    """The lambda computed from the true errors: (c/sqrt(n)) g~(X' U V')
    with U V' the polar factor of the centered error matrix

    Args:
        data: the Dataset
        errors: the true error matrix (n x q)
        kind: the PenaltyKind
        c: the multiplier (packaged default if None)
    """
    kind = PenaltyKind.from_name(kind)
    c = config.section('tuning')['c'] if c is None else float(c)
    errors = np.asarray(errors, dtype=float)
    errors = errors - errors.mean(axis=0)
    svd = thin_svd(errors)
    return c * dual_norm(kind, data.x.T.dot(svd.polar(DIRECTION_TOL))) / \
        np.sqrt(data.n)
