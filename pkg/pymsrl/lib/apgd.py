"""
Accelerated proximal gradient solver, usable while the residual matrix
keeps q non-zero singular values, and the hybrid path driver that falls
back to ADMM once it does not
"""
import logging

import numpy as np

from pymsrl.lib import config
from pymsrl.lib.admm import AdmmConfig, admm_fit, state_from_coefficients
from pymsrl.lib.fit import FitResult, objective
from pymsrl.lib.linalg.matrix import singular_values, thin_svd
from pymsrl.lib.penalties import PenaltySpec, penalty_value, prox
from pymsrl.lib.utils import ConfigError, NumericalError, RankDeficient

logger = logging.getLogger(__name__)

# Consecutive small objective changes needed before stopping
PATIENCE = 3


class ApgdConfig(object):
    """Step size and stopping rule for the accelerated proximal gradient
    solver

    Attributes:
        initial_step: first trial step size
        backtrack_shrink: factor applied to the step on a failed
            sufficient decrease test, in (0, 1)
        max_iter: iteration cap
        obj_tol: relative objective change regarded as no progress
        rank_tol_factor: the residual is rank deficient when
            sigma_q <= rank_tol_factor * sigma_1
    """
    def __init__(self, initial_step=1.0, backtrack_shrink=0.5,
                 max_iter=10000, obj_tol=1e-8, rank_tol_factor=1e-8):
        self.initial_step = float(initial_step)
        self.backtrack_shrink = float(backtrack_shrink)
        self.max_iter = int(max_iter)
        self.obj_tol = float(obj_tol)
        self.rank_tol_factor = float(rank_tol_factor)

        if self.initial_step <= 0.0:
            raise ConfigError('initial_step must be positive')
        if not 0.0 < self.backtrack_shrink < 1.0:
            raise ConfigError('backtrack_shrink must lie in (0, 1), got %r'
                              % self.backtrack_shrink)
        if self.max_iter < 1 or self.obj_tol <= 0.0 or \
                self.rank_tol_factor <= 0.0:
            raise ConfigError('max_iter, obj_tol and rank_tol_factor must '
                              'be positive')

    @classmethod
    def defaults(cls, **overrides):
        """Builds a config from the packaged defaults, with overrides"""
        settings = config.section('apgd')
        settings.update(overrides)
        return cls(**settings)

    def replace(self, **changes):
        settings = dict(vars(self))
        settings.update(changes)
        return ApgdConfig(**settings)


def _is_full_rank(d, q, rank_tol_factor):
    """Whether singular values d describe a residual of rank q"""
    return (d.size >= q and d[0] > 0.0 and
            d[q - 1] > rank_tol_factor * d[0])


def nuclear_residual_gradient(data, b, rank_tol_factor=1e-8):
    """Gradient of b -> ||Y - X b||_* at a full-rank residual

    Args:
        data: the Dataset
        b: coefficient matrix (p x q)
        rank_tol_factor: relative rank tolerance
    Returns:
        -X' U V' where (U, D, V) is the thin SVD of Y - X b
    Raises:
        RankDeficient: if the residual has fewer than q singular values
            above the tolerance
    """
    svd = thin_svd(data.y - data.x.dot(b))
    if not _is_full_rank(svd.d, data.q, rank_tol_factor):
        raise RankDeficient('residual matrix is rank deficient; the '
                            'nuclear norm of residuals is not '
                            'differentiable here')
    return -data.x.T.dot(svd.polar())


def apgd_fit(data, pen, cfg=None, warm_start=None):
    """Fits the multivariate square-root lasso by accelerated proximal
    gradient descent with backtracking

    Uses the FISTA extrapolation sequence, restarts the momentum whenever
    the objective would increase, and stops when the relative objective
    change stays below obj_tol for three consecutive iterations.

    Args:
        data: the Dataset, with n > q
        pen: the PenaltySpec
        cfg: an ApgdConfig (packaged defaults if None)
        warm_start: an initial coefficient matrix, or None for zero
    Returns:
        a FitResult tagged 'apgd'
    Raises:
        RankDeficient: if n <= q or an iterate's residual loses rank; the
            exception carries the last full-rank iterate
        NumericalError: if values become non-finite or the step collapses
    """
    cfg = cfg or ApgdConfig.defaults()
    n, q = data.n, data.q
    if n <= q:
        raise RankDeficient('accelerated proximal gradient needs n > q '
                            '(n=%d, q=%d)' % (n, q))

    x, y = data.x, data.y
    sqrt_n = np.sqrt(n)
    tol = cfg.rank_tol_factor

    if warm_start is None:
        b = np.zeros((data.p, q))
    else:
        b = np.array(warm_start, dtype=float)

    d = singular_values(y - x.dot(b))
    if not _is_full_rank(d, q, tol):
        raise RankDeficient('starting point has a rank deficient residual',
                            iteration=0, last_good=None)
    value = np.sum(d) / sqrt_n + pen.lam * penalty_value(pen.kind, b)

    z = b.copy()
    b_prev = b.copy()
    theta = 1.0
    step = cfg.initial_step
    small = 0
    restarted = False
    converged = False
    history = []

    for k in range(cfg.max_iter):
        # Gradient of the smooth part at the extrapolation point
        svd_z = thin_svd(y - x.dot(z))
        if not _is_full_rank(svd_z.d, q, tol):
            raise RankDeficient('residual lost rank at iteration %d' % k,
                                iteration=k, last_good=b.copy())
        f_z = np.sum(svd_z.d) / sqrt_n
        grad = -x.T.dot(svd_z.polar()) / sqrt_n

        # Backtracking on the sufficient decrease condition of the
        # smooth part
        while True:
            b_new = prox(pen.kind, z - step * grad, step * pen.lam)
            d_new = singular_values(y - x.dot(b_new))
            f_new = np.sum(d_new) / sqrt_n
            move = b_new - z
            bound = (f_z + np.sum(grad * move) +
                     np.sum(move * move) / (2.0 * step))
            if f_new <= bound + 1e-14 * abs(f_z):
                break
            step *= cfg.backtrack_shrink
            if step < 1e-20:
                raise NumericalError('step size collapsed at iteration %d'
                                     % k, iteration=k)

        if not np.all(np.isfinite(b_new)):
            raise NumericalError('APGD iterate became non-finite at '
                                 'iteration %d' % k, iteration=k)

        value_new = f_new + pen.lam * penalty_value(pen.kind, b_new)

        # Restart the momentum rather than accept an increase
        if value_new > value and not restarted:
            theta = 1.0
            z = b.copy()
            restarted = True
            continue
        restarted = False

        if not _is_full_rank(d_new, q, tol):
            raise RankDeficient('residual lost rank at iteration %d' % k,
                                iteration=k, last_good=b.copy())

        change = abs(value - value_new) / max(abs(value), 1e-300)
        history.append({'iter': k + 1, 'objective': value_new,
                        'step': step})
        b_prev, b, value = b, b_new, value_new

        small = small + 1 if change < cfg.obj_tol else 0
        if small >= PATIENCE:
            converged = True
            break

        theta_new = (1.0 + np.sqrt(1.0 + 4.0 * theta * theta)) / 2.0
        z = b + ((theta - 1.0) / theta_new) * (b - b_prev)
        theta = theta_new

    iterations = len(history)
    if not converged:
        logger.warning('APGD reached max_iter=%d without converging at %r',
                       cfg.max_iter, pen)
    return FitResult(b, objective(data, pen, b), iterations, converged,
                     'apgd', pen.lam, history=history)


def _check_grid(lambdas):
    lambdas = np.asarray(lambdas, dtype=float)
    if lambdas.ndim != 1 or lambdas.size == 0:
        raise ConfigError('lambda grid must be a non-empty 1-D sequence')
    if np.any(lambdas <= 0.0):
        raise ConfigError('lambda grid values must be positive')
    if np.any(np.diff(lambdas) >= 0.0):
        raise ConfigError('lambda grid must be strictly descending')
    return lambdas


def hybrid_path_fit(data, kind, lambdas, cfg_admm=None, cfg_apgd=None):
    """Computes a warm-started solution path, using accelerated proximal
    gradient for large lambda and ADMM from the first rank deficient
    residual onwards

    Args:
        data: the Dataset
        kind: the PenaltyKind
        lambdas: strictly descending positive grid
        cfg_admm: an AdmmConfig
        cfg_apgd: an ApgdConfig
    Returns:
        a list of FitResult, one per lambda, each tagged with its solver
    Raises:
        ConfigError: if the grid is not strictly descending and positive
        NumericalError: on a hard solver failure, naming the lambda
    """
    lambdas = _check_grid(lambdas)
    cfg_admm = cfg_admm or AdmmConfig.defaults()
    cfg_apgd = cfg_apgd or ApgdConfig.defaults()

    use_apgd = data.n > data.q
    warm_b = None
    state = None
    fits = []

    for lam in lambdas:
        pen = PenaltySpec(kind, lam)
        try:
            if use_apgd:
                try:
                    fit = apgd_fit(data, pen, cfg_apgd, warm_start=warm_b)
                    warm_b = fit.b_hat
                    fits.append(fit)
                    continue
                except RankDeficient as err:
                    logger.info('residual rank deficient at lambda=%g, '
                                'switching to ADMM for the rest of the path',
                                lam)
                    use_apgd = False
                    start = err.last_good
                    if start is None:
                        start = warm_b
                    if start is not None:
                        state = state_from_coefficients(
                            data, start, cfg_admm.rho0,
                            cfg_apgd.rank_tol_factor)

            fit = admm_fit(data, pen, cfg_admm, warm_start=state)
            state = fit.state
            fits.append(fit)
        except RankDeficient:
            raise
        except NumericalError as err:
            raise NumericalError('solver failed at lambda=%g: %s'
                                 % (lam, err), iteration=err.iteration)
    return fits


def auto_fit(data, pen, solver='auto', cfg_admm=None, cfg_apgd=None):
    """Fits a single lambda with the requested solver

    'auto' tries accelerated proximal gradient when n > q and falls back
    to ADMM on a rank deficient residual.

    Args:
        data: the Dataset
        pen: the PenaltySpec
        solver: 'auto', 'admm' or 'apgd'
        cfg_admm, cfg_apgd: solver configs
    Returns:
        a FitResult
    Raises:
        ConfigError: for an unknown solver name
        RankDeficient: if 'apgd' was forced and cannot be used
    """
    if solver not in ('auto', 'admm', 'apgd'):
        raise ConfigError('unknown solver %r (expected auto, admm or apgd)'
                          % solver)
    if solver == 'admm':
        return admm_fit(data, pen, cfg_admm)
    if solver == 'apgd':
        return apgd_fit(data, pen, cfg_apgd)
    if data.n > data.q:
        try:
            return apgd_fit(data, pen, cfg_apgd)
        except RankDeficient:
            logger.info('residual rank deficient at %r, using ADMM', pen)
    return admm_fit(data, pen, cfg_admm)
