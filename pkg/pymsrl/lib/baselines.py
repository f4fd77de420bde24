"""
Comparison estimators sharing the penalty machinery: penalized least
squares, the column-wise calibrated square-root lasso and the
post-selection refit
"""
import logging

import numpy as np
from joblib import Parallel, delayed
from scipy import linalg

from pymsrl.lib import config
from pymsrl.lib.admm import admm_fit
from pymsrl.lib.apgd import hybrid_path_fit
from pymsrl.lib.fit import FitResult
from pymsrl.lib.linalg.dataset import Dataset
from pymsrl.lib.penalties import PenaltyKind, PenaltySpec, dual_norm, \
    penalty_value, prox
from pymsrl.lib.tuning import lambda_grid, lambda_max
from pymsrl.lib.utils import ConfigError, DataError, NumericalError, \
    resolve_threads
from pymsrl.lib.verification import least_squares_kkt_residual

logger = logging.getLogger(__name__)


class PlsConfig(object):
    """Settings of the penalized least squares solver

    Attributes:
        max_iter: iteration cap
        tol: relative coefficient change below which optimality is tested
        kkt_tol: largest optimality gap accepted as converged
    """
    def __init__(self, max_iter=50000, tol=1e-7, kkt_tol=1e-6):
        self.max_iter = int(max_iter)
        self.tol = float(tol)
        self.kkt_tol = float(kkt_tol)
        if self.max_iter < 1 or self.tol <= 0.0 or self.kkt_tol <= 0.0:
            raise ConfigError('max_iter, tol and kkt_tol must be positive')

    @classmethod
    def defaults(cls, **overrides):
        settings = config.section('pls')
        settings.update(overrides)
        return cls(**settings)


def pls_objective(data, pen, b):
    """(1/2n) ||Y - X b||_F^2 + lam g(b)"""
    resid = data.y - data.x.dot(b)
    return (np.sum(resid * resid) / (2.0 * data.n) +
            pen.lam * penalty_value(pen.kind, b))


def pls_fit(data, pen, cfg=None, warm_start=None):
    """Fits penalized least squares by accelerated proximal gradient with
    the fixed step 1/L, L = ||X||^2 / n, restarting the momentum when the
    objective increases

    The run stops once the coefficients settle and the optimality gap
    (see verification.least_squares_kkt_residual) is at most cfg.kkt_tol.

    Args:
        data: the Dataset
        pen: the PenaltySpec
        cfg: a PlsConfig
        warm_start: initial coefficients, or None for zero
    Returns:
        a FitResult tagged 'pls'
    Raises:
        NumericalError: if an iterate becomes non-finite
    """
    cfg = cfg or PlsConfig.defaults()
    x, y, n = data.x, data.y, data.n
    lipschitz = data.x_sq_norm / n

    b = np.zeros((data.p, data.q)) if warm_start is None else \
        np.array(warm_start, dtype=float)
    if lipschitz <= 0.0:
        return FitResult(b * 0.0, pls_objective(data, pen, b * 0.0), 0, True,
                         'pls', pen.lam)

    step = 1.0 / lipschitz
    xty = x.T.dot(y) / n
    xtx = x.T.dot(x) / n
    value = pls_objective(data, pen, b)
    z = b.copy()
    theta = 1.0
    converged = False

    for k in range(cfg.max_iter):
        grad = xtx.dot(z) - xty
        b_new = prox(pen.kind, z - step * grad, step * pen.lam)
        if not np.all(np.isfinite(b_new)):
            raise NumericalError('PLS iterate became non-finite at iteration '
                                 '%d' % (k + 1), iteration=k + 1)

        value_new = pls_objective(data, pen, b_new)
        if value_new > value and theta > 1.0:
            # Restart from the last iterate without momentum
            z = b.copy()
            theta = 1.0
            continue

        change = np.linalg.norm(b_new - b)
        theta_new = (1.0 + np.sqrt(1.0 + 4.0 * theta * theta)) / 2.0
        z = b_new + ((theta - 1.0) / theta_new) * (b_new - b)
        b, value, theta = b_new, value_new, theta_new

        if change <= cfg.tol * max(1.0, np.linalg.norm(b)) and \
                least_squares_kkt_residual(data, pen, b) <= cfg.kkt_tol:
            converged = True
            break

    if not converged:
        logger.warning('PLS reached max_iter=%d without converging at %r',
                       cfg.max_iter, pen)
    return FitResult(b, value, k + 1, converged, 'pls', pen.lam)


def pls_lambda_max(data, kind):
    """g~(X'Y) / n, the smallest lambda with the zero solution"""
    return dual_norm(PenaltyKind.from_name(kind), data.x.T.dot(data.y)) / \
        data.n


def pls_path(data, kind, lambdas=None, nlambda=None, min_ratio=None,
             cfg=None):
    """Warm-started penalized least squares path

    Returns:
        a tuple (lambdas, list of FitResult)
    """
    kind = PenaltyKind.from_name(kind)
    if lambdas is None:
        lam_max = pls_lambda_max(data, kind)
        if lam_max <= 0.0:
            raise DataError('responses are uncorrelated with every '
                            'predictor; the path is identically zero')
        lambdas = lambda_grid(lam_max, nlambda, min_ratio)

    fits = []
    warm = None
    for lam in lambdas:
        fit = pls_fit(data, PenaltySpec(kind, lam), cfg, warm_start=warm)
        warm = fit.b_hat
        fits.append(fit)
    return np.asarray(lambdas, dtype=float), fits


def response_column(data, k):
    """The single-response Dataset for response column k"""
    return Dataset(data.y[:, k:k + 1], data.x, data.normalized,
                   data.column_scales, data.y_means[k:k + 1], data.x_means)


def _require_l1(kind):
    kind = PenaltyKind.from_name(kind)
    if kind is not PenaltyKind.L1:
        raise ConfigError('the calibrated estimator is only supported with '
                          'the separable lasso penalty, got %s' % kind.value)
    return kind


def _stack(fits, lam, solver):
    b = np.hstack([fit.b_hat for fit in fits])
    return FitResult(b, float(sum(fit.objective for fit in fits)),
                     max(fit.iterations for fit in fits),
                     all(fit.converged for fit in fits), solver, lam)


def calibrated_fit(data, kind=PenaltyKind.L1, lam=None, cfg_admm=None,
                   n_jobs=None):
    """Fits q separate univariate square-root lassos sharing one lambda

    Args:
        data: the Dataset
        kind: must be the lasso penalty
        lam: the shared tuning parameter
        cfg_admm: the AdmmConfig used for every column
        n_jobs: worker count
    Returns:
        a FitResult tagged 'calibrated' whose objective is the sum of the
        column objectives
    Raises:
        ConfigError: for a non-separable penalty
    """
    kind = _require_l1(kind)
    pen = PenaltySpec(kind, lam)
    fits = Parallel(n_jobs=resolve_threads(n_jobs))(
        delayed(admm_fit)(response_column(data, k), pen, cfg_admm)
        for k in range(data.q))
    return _stack(fits, pen.lam, 'calibrated')


def calibrated_lambda_max(data):
    """Largest of the per-column zero thresholds"""
    return max(lambda_max(response_column(data, k), PenaltyKind.L1)
               for k in range(data.q))


def calibrated_path(data, kind=PenaltyKind.L1, lambdas=None, nlambda=None,
                    min_ratio=None, cfg_admm=None, cfg_apgd=None,
                    n_jobs=None):
    """Warm-started calibrated path, one hybrid path per column

    Returns:
        a tuple (lambdas, list of FitResult)
    """
    _require_l1(kind)
    if lambdas is None:
        lam_max = calibrated_lambda_max(data)
        if lam_max <= 0.0:
            raise DataError('responses are constant; the path is '
                            'identically zero')
        lambdas = lambda_grid(lam_max, nlambda, min_ratio)

    columns = Parallel(n_jobs=resolve_threads(n_jobs))(
        delayed(hybrid_path_fit)(response_column(data, k), PenaltyKind.L1,
                                 lambdas, cfg_admm, cfg_apgd)
        for k in range(data.q))
    fits = [_stack([column[i] for column in columns], lam, 'calibrated')
            for i, lam in enumerate(lambdas)]
    return np.asarray(lambdas, dtype=float), fits


def refit(data, b_hat, max_alternations=None, tol=None, ridge=None):
    """Re-estimates the selected coefficients by seemingly unrelated
    regression

    Alternates generalized least squares on the support of b_hat, given
    the residual covariance estimate, with the covariance update
    R'R / n + ridge I, starting from the identity. Entries outside the
    support stay zero.

    Args:
        data: the Dataset b_hat was fitted on
        b_hat: the selected estimate (p x q)
        max_alternations, tol, ridge: packaged defaults if None
    Returns:
        the refitted coefficients (p x q)
    Raises:
        DataError: if some response has n or more selected predictors
        NumericalError: if the restricted normal equations are singular
    """
    settings = config.section('refit')
    max_alternations = settings['max_alternations'] \
        if max_alternations is None else int(max_alternations)
    tol = settings['tol'] if tol is None else float(tol)
    ridge = settings['ridge'] if ridge is None else float(ridge)

    support = np.asarray(b_hat) != 0.0
    sizes = support.sum(axis=0)
    if np.any(sizes >= data.n):
        k = int(np.argmax(sizes))
        raise DataError('response %d has %d selected predictors but only '
                        '%d observations; use a larger lambda for a sparser '
                        'fit' % (k, sizes[k], data.n))

    b = np.zeros(support.shape)
    if not np.any(support):
        return b

    # Supported entries in column-major vec order
    ks, js = np.nonzero(support.T)
    gram = data.x.T.dot(data.x)
    xty = data.x.T.dot(data.y)
    sigma = np.eye(data.q)

    for _ in range(max_alternations):
        omega = linalg.inv(sigma)
        lhs = omega[np.ix_(ks, ks)] * gram[np.ix_(js, js)]
        rhs = xty.dot(omega)[js, ks]
        try:
            coef = linalg.solve(lhs, rhs, assume_a='pos')
        except linalg.LinAlgError as err:
            raise NumericalError('refit normal equations are singular: %s'
                                 % err)

        b_new = np.zeros(support.shape)
        b_new[js, ks] = coef
        change = np.linalg.norm(b_new - b)
        b = b_new

        resid = data.y - data.x.dot(b)
        sigma = resid.T.dot(resid) / data.n + ridge * np.eye(data.q)
        if change < tol:
            break
    return b
