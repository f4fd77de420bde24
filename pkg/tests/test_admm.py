import csv
import logging

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import optimize

from pymsrl.lib.admm import AdmmConfig, admm_fit, admm_residual_check, \
    state_from_coefficients, write_diagnostics
from pymsrl.lib.fit import objective
from pymsrl.lib.linalg.dataset import center_and_normalize
from pymsrl.lib.penalties import PenaltyKind, PenaltySpec
from pymsrl.lib.tuning import lambda_max
from pymsrl.lib.utils import ConfigError

KINDS = list(PenaltyKind)


def test_objective(make_data):
    data = make_data(15, 4, 3, seed=0)
    pen = PenaltySpec('lasso', 0.3)
    assert objective(data, pen, np.zeros((4, 3))) == pytest.approx(
        np.sum(np.linalg.svd(data.y, compute_uv=False)) / np.sqrt(15))

    b = np.random.default_rng(1).standard_normal((4, 3))
    resid = data.y - data.x.dot(b)
    expected = (np.sum(np.linalg.svd(resid, compute_uv=False)) / np.sqrt(15)
                + 0.3 * np.sum(np.abs(b)))
    assert objective(data, pen, b) == pytest.approx(expected)


def test_objective_zero_at_exact_fit():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((10, 3))
    b = rng.standard_normal((3, 2))
    data = center_and_normalize(x.dot(b), x, normalize=False)
    assert objective(data, PenaltySpec('group', 0.0), b) == \
        pytest.approx(0.0, abs=1e-12)


def test_config_validation():
    with pytest.raises(ConfigError):
        AdmmConfig(tau=2.0)
    with pytest.raises(ConfigError):
        AdmmConfig(rho0=0.0)
    with pytest.raises(ConfigError):
        AdmmConfig(eps_rel=0.0)
    cfg = AdmmConfig.defaults(max_iter=7)
    assert cfg.max_iter == 7
    assert cfg.kappa == 10
    assert cfg.replace(tau=1.5).tau == 1.5


@pytest.mark.parametrize('kind', KINDS)
def test_zero_above_lambda_max(make_data, tight_admm, kind):
    data = make_data(30, 5, 3, seed=3)
    lam = lambda_max(data, kind)
    fit = admm_fit(data, PenaltySpec(kind, 1.001 * lam), tight_admm)
    assert np.linalg.norm(fit.b_hat) <= 1e-6

    fit = admm_fit(data, PenaltySpec(kind, 0.9 * lam), tight_admm)
    assert np.linalg.norm(fit.b_hat) > 1e-6


def test_least_squares_at_zero_lambda(make_data, tight_admm):
    data = make_data(50, 5, 3, seed=4)
    ls = np.linalg.lstsq(data.x, data.y, rcond=None)[0]
    fit = admm_fit(data, PenaltySpec('lasso', 0.0), tight_admm)
    assert np.linalg.norm(fit.b_hat - ls) <= 1e-4 * np.linalg.norm(ls)


def _batched_objectives(data, lam, coefs):
    """Objective of many 2 x 2 coefficient matrices at once"""
    resid = data.y[np.newaxis] - np.einsum('ij,njk->nik', data.x, coefs)
    nuclear = np.linalg.svd(resid, compute_uv=False).sum(axis=1)
    return nuclear / np.sqrt(data.n) + lam * np.abs(coefs).sum(axis=(1, 2))


def test_matches_direct_search(make_data, tight_admm):
    data = make_data(8, 2, 2, seed=5, active=1, noise=0.5)
    lam = 0.3 * lambda_max(data, PenaltyKind.L1)
    pen = PenaltySpec('lasso', lam)
    fit = admm_fit(data, pen, tight_admm)

    axis = np.linspace(-3.0, 3.0, 25)
    grid = np.stack(np.meshgrid(axis, axis, axis, axis, indexing='ij'),
                    axis=-1).reshape(-1, 2, 2)
    values = _batched_objectives(data, lam, grid)
    start = grid[np.argmin(values)].ravel()

    def value(flat):
        return objective(data, pen, flat.reshape(2, 2))

    # Restarted simplex search from the best grid point
    for _ in range(5):
        polished = optimize.minimize(value, start, method='Nelder-Mead',
                                     options={'xatol': 1e-10, 'fatol': 1e-12,
                                              'maxiter': 20000})
        start = polished.x
    assert fit.objective <= np.min(values) + 1e-6
    assert fit.objective <= polished.fun + 1e-6


@pytest.mark.parametrize('kind', KINDS)
def test_coefficient_step_never_increases_lagrangian(make_data, kind):
    data = make_data(30, 8, 3, seed=6)
    pen = PenaltySpec(kind, 0.3 * lambda_max(data, kind))
    cfg = AdmmConfig(adaptive_rho=False, max_iter=300, eps_rel=1e-15,
                     eps_abs=1e-15)
    fit = admm_fit(data, pen, cfg, record=True)
    gaps = np.array([row['descent_gap'] for row in fit.history])
    assert gaps.size == fit.iterations
    assert np.all(gaps <= 1e-9)


def test_records_and_convergence(make_data):
    data = make_data(30, 5, 3, seed=7)
    pen = PenaltySpec('lasso', 0.2 * lambda_max(data, 'lasso'))
    fit = admm_fit(data, pen, record=True)
    assert fit.converged
    assert fit.solver == 'admm'
    assert len(fit.primal_residuals) == fit.iterations
    last = fit.history[-1]
    assert last['r'] <= last['e_primal']
    assert last['s'] <= last['e_dual']
    assert fit.rho_final > 0.0


def test_iteration_cap_is_not_an_error(make_data, caplog):
    data = make_data(30, 5, 3, seed=8)
    pen = PenaltySpec('lasso', 0.2 * lambda_max(data, 'lasso'))
    with caplog.at_level(logging.WARNING):
        fit = admm_fit(data, pen, AdmmConfig(max_iter=3))
    assert not fit.converged
    assert fit.iterations == 3
    assert len(fit.dual_residuals) == 3
    assert 'max_iter' in caplog.text


def test_warm_start_matches_cold_start(make_data, tight_admm):
    data = make_data(30, 6, 3, seed=9)
    lam_max = lambda_max(data, 'group')
    first = admm_fit(data, PenaltySpec('group', 0.5 * lam_max), tight_admm)
    pen = PenaltySpec('group', 0.3 * lam_max)
    warm = admm_fit(data, pen, tight_admm, warm_start=first.state)
    cold = admm_fit(data, pen, tight_admm)
    assert np.linalg.norm(warm.b_hat - cold.b_hat) <= 1e-5
    # The warm start is copied, not advanced
    assert_allclose(first.state.b, first.b_hat)


def test_state_from_coefficients(make_data):
    data = make_data(20, 4, 2, seed=10)
    b = np.random.default_rng(0).standard_normal((4, 2))
    state = state_from_coefficients(data, b, 2.0)
    assert_allclose(state.phi, data.y - data.x.dot(b))
    assert_allclose(state.gamma.T.dot(state.gamma), np.eye(2), atol=1e-10)
    assert state.rho == 2.0


def test_distance_to_solution_is_monotone(make_data):
    data = make_data(30, 5, 3, seed=11)
    pen = PenaltySpec('lasso', 0.3 * lambda_max(data, 'lasso'))
    report = admm_residual_check(data, pen, n_iter=2000)
    assert report.increases == 0
    assert report.increase_fraction == 0.0
    assert report.tail_slope <= -0.7


def test_distance_is_zero_from_the_solution():
    rng = np.random.default_rng(12)
    data = center_and_normalize(np.zeros((10, 2)),
                                rng.standard_normal((10, 3)))
    report = admm_residual_check(data, PenaltySpec('lasso', 0.1), n_iter=20)
    assert np.all(report.d_values == 0.0)


def test_increase_tolerance_is_absolute(make_data):
    data = make_data(30, 5, 3, seed=11)
    pen = PenaltySpec('lasso', 0.3 * lambda_max(data, 'lasso'))
    report = admm_residual_check(data, pen, n_iter=300)
    steps = np.diff(report.d_values)
    assert report.increases == int(np.sum(steps > 1e-9))

    rng = np.random.default_rng(12)
    flat = center_and_normalize(np.zeros((10, 2)),
                                rng.standard_normal((10, 3)))
    counted = admm_residual_check(flat, PenaltySpec('lasso', 0.1), n_iter=20,
                                  increase_tol=-1.0)
    assert counted.increases == len(counted.d_values) - 1
    ignored = admm_residual_check(flat, PenaltySpec('lasso', 0.1), n_iter=20,
                                  increase_tol=0.0)
    assert ignored.increases == 0


def test_monotonicity_needs_unit_tau(make_data):
    data = make_data(20, 4, 2, seed=13)
    with pytest.raises(ConfigError):
        admm_residual_check(data, PenaltySpec('lasso', 0.1),
                            AdmmConfig(tau=1.5))


def test_write_diagnostics(make_data, tmp_path):
    data = make_data(20, 4, 2, seed=14)
    fit = admm_fit(data, PenaltySpec('nuclear', 0.1), record=True)
    path = str(tmp_path / 'diag.csv')
    write_diagnostics(path, fit)
    with open(path) as handle:
        rows = list(csv.DictReader(handle))
    assert len(rows) == fit.iterations
    assert list(rows[0]) == ['iter', 'r', 's', 'e_primal', 'e_dual', 'rho',
                             'objective']
    assert float(rows[-1]['objective']) == pytest.approx(fit.objective)
