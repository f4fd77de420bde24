"""
The prox-linear ADMM solver for the multivariate square-root lasso,
valid for every (n, p, q) and every lambda
"""
import csv
import logging

import numpy as np

from pymsrl.lib import config
from pymsrl.lib.fit import FitResult, objective
from pymsrl.lib.linalg.matrix import thin_svd
from pymsrl.lib.penalties import penalty_value, prox
from pymsrl.lib.utils import ConfigError, NumericalError

logger = logging.getLogger(__name__)

GOLDEN = (1.0 + np.sqrt(5.0)) / 2.0


class AdmmConfig(object):
    """Step sizes and stopping rule for the ADMM solver

    Attributes:
        rho0: initial augmented Lagrangian step size
        tau: dual step scaling, in (0, (1 + sqrt(5)) / 2)
        eta_pad: added to ||X'X|| to form the linearization constant eta
        kappa: number of iterations between step size updates
        eps_rel: relative convergence tolerance
        eps_abs: absolute convergence tolerance
        max_iter: iteration cap
        adaptive_rho: whether rho is updated every kappa iterations
    """
    def __init__(self, rho0=1.0, tau=1.0, eta_pad=1e-4, kappa=10,
                 eps_rel=5e-4, eps_abs=1e-10, max_iter=20000,
                 adaptive_rho=True):
        self.rho0 = float(rho0)
        self.tau = float(tau)
        self.eta_pad = float(eta_pad)
        self.kappa = int(kappa)
        self.eps_rel = float(eps_rel)
        self.eps_abs = float(eps_abs)
        self.max_iter = int(max_iter)
        self.adaptive_rho = bool(adaptive_rho)

        if not 0.0 < self.tau < GOLDEN:
            raise ConfigError('tau must lie in (0, (1 + sqrt(5))/2), got %r'
                              % self.tau)
        if self.rho0 <= 0.0:
            raise ConfigError('rho0 must be positive, got %r' % self.rho0)
        if self.eta_pad < 0.0:
            raise ConfigError('eta_pad must be non-negative, got %r'
                              % self.eta_pad)
        if self.eps_rel <= 0.0 or self.eps_abs <= 0.0:
            raise ConfigError('eps_rel and eps_abs must be positive')
        if self.kappa < 1 or self.max_iter < 1:
            raise ConfigError('kappa and max_iter must be positive integers')

    @classmethod
    def defaults(cls, **overrides):
        """Builds a config from the packaged defaults, with overrides"""
        settings = config.section('admm')
        settings.update(overrides)
        return cls(**settings)

    def replace(self, **changes):
        """Returns a copy with some settings changed"""
        settings = dict(vars(self))
        settings.update(changes)
        return AdmmConfig(**settings)


class SolverState(object):
    """The ADMM iterate triple together with the current step size

    Attributes:
        b: coefficient iterate (p x q)
        phi: splitting variable standing in for Y - X b (n x q)
        gamma: dual variable (n x q)
        rho: current step size
        iteration: iterations run so far
    """
    def __init__(self, b, phi, gamma, rho, iteration=0):
        self.b = b
        self.phi = phi
        self.gamma = gamma
        self.rho = rho
        self.iteration = iteration

    def copy(self):
        return SolverState(self.b.copy(), self.phi.copy(), self.gamma.copy(),
                           self.rho, self.iteration)


def cold_state(data, rho):
    """The cold start: b = 0, phi = Y, gamma = 0, so the constraint
    residual starts at zero"""
    return SolverState(np.zeros((data.p, data.q)), data.y.copy(),
                       np.zeros((data.n, data.q)), rho)


def state_from_coefficients(data, b, rho, rank_tol=1e-8):
    """Builds a warm start from a coefficient matrix alone

    phi is set to the residual, and gamma to the polar factor U V' of the
    residual, which is the optimal dual whenever b is optimal and the
    residual has full column rank.
    """
    resid = data.y - data.x.dot(b)
    svd = thin_svd(resid)
    return SolverState(np.array(b, dtype=float), resid,
                       svd.polar(rank_tol), rho)


def _lagrangian_gap(data, lam_t, kind, b_old, b_new, xb_old, xb_new, phi,
                    gamma, rho):
    """G_rho(b_new, phi, gamma) - G_rho(b_old, phi, gamma); the nuclear
    norm of phi cancels"""
    r_old = data.y - xb_old - phi
    r_new = data.y - xb_new - phi
    return (lam_t * (penalty_value(kind, b_new) - penalty_value(kind, b_old))
            + np.sum(gamma * (xb_old - xb_new))
            + 0.5 * rho * (np.sum(r_new * r_new) - np.sum(r_old * r_old)))


def _iterate(data, pen, cfg, state, check=True, n_iter=None, record=False,
             keep_iterates=False):
    """Runs prox-linear ADMM iterations in place on `state`

    Args:
        data: the Dataset
        pen: the PenaltySpec
        cfg: the AdmmConfig
        state: the SolverState to advance
        check: whether to stop when the convergence criteria hold
        n_iter: iterations to run (defaults to cfg.max_iter)
        record: whether to keep per-iteration diagnostics
        keep_iterates: whether to keep copies of every (b, phi, gamma)
    Returns:
        a tuple (converged, primal history, dual history, records,
        iterates)
    Raises:
        NumericalError: if an iterate becomes non-finite
    """
    x, y = data.x, data.y
    n, p = data.n, data.p
    eta = data.x_sq_norm + cfg.eta_pad
    lam_t = np.sqrt(n) * pen.lam
    y_norm = np.linalg.norm(y)
    n_iter = cfg.max_iter if n_iter is None else n_iter

    b, phi, gamma, rho = state.b, state.phi, state.gamma, state.rho
    xb = x.dot(b)

    primal, dual, records, iterates = [], [], [], []
    if keep_iterates:
        iterates.append((b.copy(), phi.copy(), gamma.copy()))

    converged = False
    for k in range(n_iter):
        rho_inv = 1.0 / rho

        # Linearized coefficient update
        w = y + rho_inv * gamma - phi - xb
        b_new = prox(pen.kind, b + x.T.dot(w) / eta, lam_t / (rho * eta))
        xb_new = x.dot(b_new)

        # Singular value soft-thresholding for phi
        svd = thin_svd(y + rho_inv * gamma - xb_new)
        shrunk = np.maximum(svd.d - rho_inv, 0.0)
        phi_new = (svd.u * shrunk).dot(svd.v.T)

        resid = y - xb_new - phi_new
        gamma_new = gamma + cfg.tau * rho * resid

        if not (np.all(np.isfinite(b_new)) and np.all(np.isfinite(gamma_new))):
            raise NumericalError('ADMM iterate became non-finite at '
                                 'iteration %d' % (state.iteration + k + 1),
                                 iteration=state.iteration + k + 1)

        r = float(np.sum(resid * resid))
        dphi = x.T.dot(phi_new - phi)
        s = float(rho * rho * np.sum(dphi * dphi))
        e_primal = (cfg.eps_abs * np.sqrt(n) + cfg.eps_rel *
                    max(np.linalg.norm(xb_new), np.linalg.norm(phi_new),
                        y_norm))
        e_dual = (cfg.eps_abs * np.sqrt(p) +
                  cfg.eps_rel * np.linalg.norm(x.T.dot(gamma_new)))
        primal.append(r)
        dual.append(s)

        if record:
            records.append({
                'iter': state.iteration + k + 1,
                'r': r, 's': s,
                'e_primal': e_primal, 'e_dual': e_dual,
                'rho': rho,
                'objective': objective(data, pen, b_new),
                'descent_gap': _lagrangian_gap(data, lam_t, pen.kind, b,
                                               b_new, xb, xb_new, phi, gamma,
                                               rho),
            })

        b, xb, phi, gamma = b_new, xb_new, phi_new, gamma_new
        if keep_iterates:
            iterates.append((b.copy(), phi.copy(), gamma.copy()))

        if check and r <= e_primal and s <= e_dual:
            converged = True
            k += 1
            break

        # Periodic step size update; gamma is left as is
        if cfg.adaptive_rho and (k + 1) % cfg.kappa == 0:
            rho *= (float(r > 10.0 * s) - 0.5 * float(s > 10.0 * r) + 1.0)
    else:
        k = n_iter

    state.b, state.phi, state.gamma, state.rho = b, phi, gamma, rho
    state.iteration += k
    return converged, primal, dual, records, iterates


def admm_fit(data, pen, cfg=None, warm_start=None, record=False):
    """Fits the multivariate square-root lasso with prox-linear ADMM

    Args:
        data: the Dataset
        pen: the PenaltySpec (lambda on the criterion's own scale)
        cfg: an AdmmConfig (packaged defaults if None)
        warm_start: a SolverState to start from (not modified), or None
            for the cold start
        record: whether to keep per-iteration diagnostics in
            FitResult.history
    Returns:
        a FitResult tagged 'admm'; converged is False if max_iter was hit
    Raises:
        NumericalError: if an iterate becomes non-finite
    """
    cfg = cfg or AdmmConfig.defaults()
    if warm_start is None:
        state = cold_state(data, cfg.rho0)
    else:
        state = warm_start.copy()
        state.iteration = 0

    logger.debug('ADMM start: n=%d p=%d q=%d %r rho=%g', data.n, data.p,
                 data.q, pen, state.rho)
    converged, primal, dual, records, _ = _iterate(data, pen, cfg, state,
                                                   record=record)
    if not converged:
        logger.warning('ADMM reached max_iter=%d without converging at %r',
                       cfg.max_iter, pen)

    value = objective(data, pen, state.b)
    logger.debug('ADMM done after %d iterations, objective %.8g',
                 state.iteration, value)
    return FitResult(state.b.copy(), value, state.iteration, converged,
                     'admm', pen.lam, primal, dual, state.rho, state,
                     records if record else None)


class MonotonicityReport(object):
    """Summary of the distance-to-solution sequence d_rho(k)

    Attributes:
        d_values: d_rho(k) for k = 1, 2, ...
        increases: number of steps where d_rho increased beyond tolerance
        increase_fraction: increases divided by the number of steps
        tail_slope: least squares slope of log d_rho(k) on log k over the
            second half of the points above the rounding floor (nan when
            fewer than three remain)
        rho: the fixed step size used
    """
    def __init__(self, d_values, increases, increase_fraction, tail_slope,
                 rho):
        self.d_values = d_values
        self.increases = increases
        self.increase_fraction = increase_fraction
        self.tail_slope = tail_slope
        self.rho = rho


def _q_norm_sq(x, eta, delta):
    """||delta||^2 in the metric Q = eta I - X'X"""
    xd = x.dot(delta)
    return eta * np.sum(delta * delta) - np.sum(xd * xd)


def admm_residual_check(data, pen, cfg=None, n_iter=200, increase_tol=1e-9,
                        start_at_reference=False):
    """Checks that d_rho(k) is non-increasing along an ADMM run

    A normal adaptive run fixes rho at its final value; a long run at that
    fixed rho provides the reference solution; a diagnostic
    run of n_iter iterations at the same fixed rho records every iterate.
    An increase counts when d(k+1) - d(k) > increase_tol.

    Args:
        data: the Dataset
        pen: the PenaltySpec
        cfg: an AdmmConfig with tau = 1
        n_iter: length of the diagnostic run
        increase_tol: absolute increase tolerance
        start_at_reference: start the diagnostic run at the reference
            solution instead of the cold start
    Returns:
        a MonotonicityReport
    Raises:
        ConfigError: if cfg.tau is not 1
    """
    cfg = cfg or AdmmConfig.defaults()
    if cfg.tau != 1.0:
        raise ConfigError('the monotonicity certificate requires tau = 1, '
                          'got %r' % cfg.tau)

    rho = admm_fit(data, pen, cfg).rho_final
    fixed = cfg.replace(rho0=rho, adaptive_rho=False)

    # Reference: the fixed point of the same fixed-rho map
    ref = cold_state(data, rho)
    _iterate(data, pen, fixed, ref, check=False,
             n_iter=max(50 * n_iter, 10000))

    start = ref.copy() if start_at_reference else cold_state(data, rho)
    _, _, _, _, iterates = _iterate(data, pen, fixed, start, check=False,
                                    n_iter=n_iter, keep_iterates=True)

    eta = data.x_sq_norm + cfg.eta_pad
    d = []
    for b, phi, gamma in iterates[1:]:
        db, dphi, dgamma = b - ref.b, phi - ref.phi, gamma - ref.gamma
        d.append(rho * _q_norm_sq(data.x, eta, db) +
                 rho * np.sum(dphi * dphi) +
                 np.sum(dgamma * dgamma) / rho)
    d = np.array(d)

    steps = np.diff(d)
    increases = int(np.sum(steps > increase_tol))
    fraction = increases / float(max(len(steps), 1))

    # Fit the second half of the points still above the rounding floor
    k = np.arange(1, len(d) + 1)
    valid = np.nonzero(d > 1e-14 * max(d[0], 1e-300))[0]
    tail = valid[len(valid) // 2:]
    if tail.size >= 3:
        slope = float(np.polyfit(np.log(k[tail]), np.log(d[tail]), 1)[0])
    else:
        slope = float('nan')

    return MonotonicityReport(d, increases, fraction, slope, rho)


def write_diagnostics(path, fit):
    """Writes the per-iteration diagnostics of a recorded ADMM fit as CSV

    Columns: iter, r, s, e_primal, e_dual, rho, objective.
    """
    fields = ['iter', 'r', 's', 'e_primal', 'e_dual', 'rho', 'objective']
    with open(path, 'w', newline='') as handle:
        writer = csv.DictWriter(handle, fieldnames=fields,
                                extrasaction='ignore')
        writer.writeheader()
        for row in fit.history or []:
            writer.writerow(row)
