import csv

import numpy as np
import pytest
from numpy.testing import assert_allclose

from pymsrl.lib.apgd import hybrid_path_fit
from pymsrl.lib.fit import FitResult
from pymsrl.lib.linalg.dataset import Dataset, center_and_normalize
from pymsrl.lib.penalties import PenaltyKind
from pymsrl.lib.tuning import CorollaryConstants, PathResult, \
    TuneDistribution, assign_folds, corollary_lambda, cross_validate, \
    default_grid, fit_path, lambda_grid, lambda_max, mc_tune, oracle_lambda, \
    quantile, sample_stiefel_uniform, validation_select
from pymsrl.lib.utils import ConfigError, DataError


def test_stiefel_draws_are_orthonormal():
    rng = np.random.default_rng(0)
    for n, q in [(5, 5), (7, 3), (4, 1)]:
        o = sample_stiefel_uniform(n, q, rng)
        assert o.shape == (n, q)
        assert_allclose(o.T.dot(o), np.eye(q), atol=1e-10)
    square = sample_stiefel_uniform(6, 6, rng)
    assert abs(abs(np.linalg.det(square)) - 1.0) <= 1e-8


def test_stiefel_sphere_is_symmetric():
    rng = np.random.default_rng(1)
    first = [sample_stiefel_uniform(5, 1, rng)[0, 0] for _ in range(20000)]
    assert abs(np.mean(first)) <= 3.0 / np.sqrt(20000)


def test_stiefel_needs_n_at_least_q():
    with pytest.raises(DataError):
        sample_stiefel_uniform(2, 3, np.random.default_rng(0))


def test_mc_tune_closed_form_median():
    # The statistic is c |cos(theta)| with theta uniform on the circle
    data = Dataset(np.zeros((2, 1)), np.array([[np.sqrt(2.0)], [0.0]]),
                   False, np.ones(1), np.zeros(1), np.zeros(1))
    dist = mc_tune(data, PenaltyKind.L1, c=1.01, n_draws=50000, seed=0,
                   n_jobs=1)
    assert dist.samples.size == 50000
    assert abs(quantile(dist, 0.5) - 1.01 / np.sqrt(2.0)) <= 0.01


def test_mc_tune_ignores_responses_and_workers(make_data):
    data = make_data(20, 6, 3, seed=2)
    rng = np.random.default_rng(3)
    other = center_and_normalize(5.0 * rng.standard_normal((20, 3)), data.x)

    first = mc_tune(data, 'group', n_draws=600, seed=7, n_jobs=1)
    again = mc_tune(other, 'group', n_draws=600, seed=7, n_jobs=2)
    assert_allclose(first.samples, again.samples, rtol=1e-12)
    assert quantile(first, 0.95) == pytest.approx(quantile(again, 0.95),
                                                  rel=1e-12)

    shifted = mc_tune(data, 'group', n_draws=600, seed=8, n_jobs=1)
    assert not np.array_equal(first.samples, shifted.samples)


def _bootstrap_interval(samples, level, rng, resamples=1000):
    estimates = [np.quantile(rng.choice(samples, samples.size), level)
                 for _ in range(resamples)]
    return np.quantile(estimates, [0.025, 0.975])


def test_independent_batches_agree_on_upper_quantile(make_data):
    data = make_data(40, 15, 4, seed=5)
    correlated = make_data(40, 15, 4, seed=5, correlation=0.9)
    first = mc_tune(data, 'lasso', n_draws=5000, seed=101, n_jobs=1)
    second = mc_tune(correlated, 'lasso', n_draws=5000, seed=202, n_jobs=1)
    assert not np.array_equal(first.samples, second.samples)

    rng = np.random.default_rng(0)
    low_a, high_a = _bootstrap_interval(first.samples, 0.95, rng)
    low_b, high_b = _bootstrap_interval(second.samples, 0.95, rng)
    assert low_a <= quantile(first, 0.95) <= high_a
    assert low_b <= high_a and low_a <= high_b


def test_mc_tune_errors(make_data):
    data = make_data(4, 3, 6, seed=4)
    with pytest.raises(DataError):
        mc_tune(data, 'lasso', n_draws=10)
    wide = make_data(10, 3, 2, seed=4)
    with pytest.raises(ConfigError):
        mc_tune(wide, 'lasso', c=1.0, n_draws=10)
    with pytest.raises(ConfigError):
        mc_tune(wide, 'lasso', n_draws=0)


def test_quantile():
    dist = TuneDistribution([3.0, 1.0, 2.0], 1.01, PenaltyKind.L1, 3, 0)
    assert quantile(dist, 0.5) == pytest.approx(2.0)
    assert dist.quantile(0.25) == pytest.approx(1.5)
    levels = [0.5, 0.75, 0.85, 0.95]
    values = [quantile(dist, level) for level in levels]
    assert values == sorted(values)
    for bad in (0.0, 1.0, -0.5):
        with pytest.raises(ConfigError):
            quantile(dist, bad)


def test_samples_file(tmp_path):
    dist = TuneDistribution([0.5, 0.25], 1.01, PenaltyKind.L1, 2, 0)
    path = str(tmp_path / 'samples.csv')
    dist.to_csv(path)
    assert_allclose(np.loadtxt(path), [0.5, 0.25])


def test_lasso_closed_form():
    consts = CorollaryConstants(c=1.01, c1=1.01)
    lam = corollary_lambda('lasso', 200, 500, 50, consts)
    assert lam == pytest.approx(1.01 * np.sqrt(2 * 1.01 * np.log(50000) /
                                               199))
    with pytest.raises(DataError):
        corollary_lambda('lasso', 20, 500, 50, consts)


def test_group_closed_form():
    consts = CorollaryConstants(c=1.01, c2=2.0)
    lam = corollary_lambda('group', 100, 120, 15, consts)
    expected = (1.01 * np.sqrt(4 * 2.0 * np.log(120) / 98.0) +
                1.01 * np.sqrt(15 / 100.0))
    assert lam == pytest.approx(expected)
    with pytest.raises(ConfigError):
        corollary_lambda('group', 100, 50, 15, consts)
    with pytest.raises(DataError):
        corollary_lambda('group', 2, 120, 15, consts)


def test_nuclear_closed_form_is_linear_in_x_norm():
    consts = CorollaryConstants()
    one = corollary_lambda('nuclear', 100, 50, 5, consts, 10.0)
    two = corollary_lambda('nuclear', 100, 50, 5, consts, 20.0)
    assert two == pytest.approx(2.0 * one)
    expected = (4 * consts.c * 10.0 / 10.0 *
                (np.sqrt(4 * np.log(7 + consts.c3) * 55 / 98.0) + 0.1))
    assert one == pytest.approx(expected)
    with pytest.raises(ConfigError):
        corollary_lambda('nuclear', 100, 50, 5, consts, 1.0)
    with pytest.raises(ConfigError):
        corollary_lambda('nuclear', 100, 50, 5, consts)


def test_corollary_constants():
    assert CorollaryConstants.defaults().c2 == 2.0
    assert CorollaryConstants(c3=1.0 + 1e-9).c4 == pytest.approx(
        4 * np.log(8.0))
    with pytest.raises(ConfigError):
        CorollaryConstants(c1=1.0)


def test_lambda_max_of_zero_responses():
    x = np.random.default_rng(5).standard_normal((6, 3))
    data = center_and_normalize(np.zeros((6, 2)), x)
    for kind in PenaltyKind:
        assert lambda_max(data, kind) == 0.0
    with pytest.raises(DataError):
        default_grid(data, 'lasso')


def test_lambda_grid():
    grid = lambda_grid(2.0, 10, 1e-2)
    assert grid.size == 10
    assert grid[0] == 2.0
    assert grid[-1] == pytest.approx(0.02)
    assert np.all(np.diff(grid) < 0.0)
    assert_allclose(grid[1:] / grid[:-1], grid[1] / grid[0])
    assert lambda_grid(1.0).size == 100
    for args in [(0.0, 10, 0.1), (1.0, 0, 0.1), (1.0, 10, 1.0)]:
        with pytest.raises(ConfigError):
            lambda_grid(*args)


def test_fit_path(make_data, tmp_path):
    data = make_data(30, 6, 3, seed=6)
    result = fit_path(data, 'lasso', nlambda=8, min_ratio=0.05)
    assert result.lambdas.size == 8
    assert result.lambdas[0] == pytest.approx(lambda_max(data, 'lasso'),
                                              rel=1e-12)
    assert len(result.fits) == len(result.residual_ranks) == 8
    assert all(rank == 3 for rank in result.residual_ranks)
    assert result.best_lambda is None
    nonzeros = [fit.nonzeros for fit in result.fits]
    rising = sum(b >= a for a, b in zip(nonzeros, nonzeros[1:]))
    assert rising >= len(nonzeros) - 2
    assert nonzeros[-1] > nonzeros[0]

    path = str(tmp_path / 'path.csv')
    result.write_path(path)
    with open(path) as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == ['lambda', 'objective', 'nonzeros', 'solver',
                       'residual_rank']
    assert len(rows) == 9


def test_folds_are_balanced_and_seeded():
    labels = assign_folds(23, 5, 1)
    counts = np.bincount(labels)
    assert counts.max() - counts.min() <= 1
    assert np.array_equal(labels, assign_folds(23, 5, 1))


def _manual_fold_errors(data, kind, lambdas, fold_ids):
    """Cross-validation errors computed with an explicit loop"""
    table = []
    for label in np.unique(fold_ids):
        test = fold_ids == label
        x_train, y_train = data.x[~test], data.y[~test]
        x_means, y_means = x_train.mean(axis=0), y_train.mean(axis=0)
        centered = x_train - x_means
        scales = np.linalg.norm(centered, axis=0) / np.sqrt(len(x_train))
        train = Dataset(y_train - y_means, centered / scales, True, scales,
                        y_means, x_means)
        row = []
        for fit in hybrid_path_fit(train, kind, lambdas):
            b_raw = fit.b_hat / scales[:, np.newaxis]
            pred = (data.x[test] - x_means).dot(b_raw) + y_means
            row.append(np.mean((data.y[test] - pred) ** 2))
        table.append(row)
    return np.array(table)


def test_cross_validation_matches_explicit_loop(make_data):
    data = make_data(12, 4, 2, seed=7)
    lambdas = lambda_grid(lambda_max(data, 'lasso'), 5, 0.1)
    fold_ids = np.arange(12) % 3
    result = cross_validate(data, 'lasso', lambdas, fold_ids=fold_ids,
                            n_jobs=1)
    expected = _manual_fold_errors(data, PenaltyKind.L1, lambdas, fold_ids)
    assert_allclose(result.fold_errors, expected, rtol=1e-6)
    assert_allclose(result.cv_mean, expected.mean(axis=0), rtol=1e-6)
    assert_allclose(result.cv_se, expected.std(axis=0, ddof=1) / np.sqrt(3),
                    rtol=1e-5)
    assert len(result.fits) == 5


def test_cross_validation_symmetry(make_data):
    half = make_data(10, 3, 2, seed=8)
    y = np.vstack([half.y, half.y])
    x = np.vstack([half.x, half.x])
    data = center_and_normalize(y, x)
    lambdas = lambda_grid(lambda_max(data, 'group'), 4, 0.1)
    result = cross_validate(data, 'group', lambdas,
                            fold_ids=np.repeat([0, 1], 10), n_jobs=1)
    assert_allclose(result.fold_errors[0], result.fold_errors[1])


def test_cross_validation_is_seeded(make_data):
    data = make_data(20, 4, 2, seed=9)
    lambdas = lambda_grid(lambda_max(data, 'lasso'), 4, 0.1)
    first = cross_validate(data, 'lasso', lambdas, folds=4, seed=3, n_jobs=1)
    again = cross_validate(data, 'lasso', lambdas, folds=4, seed=3, n_jobs=2)
    assert_allclose(first.cv_mean, again.cv_mean, rtol=1e-10)
    assert first.best_lambda in lambdas


def test_cross_validation_errors(make_data):
    data = make_data(9, 3, 2, seed=10)
    lambdas = [0.5, 0.1]
    with pytest.raises(ConfigError):
        cross_validate(data, 'lasso', lambdas, folds=1)
    with pytest.raises(DataError):
        cross_validate(data, 'lasso', lambdas, folds=5)
    with pytest.raises(DataError):
        cross_validate(data, 'lasso', lambdas,
                       fold_ids=[0, 1, 1, 1, 1, 1, 1, 1, 1])


def _fit(b):
    return FitResult(np.asarray(b, dtype=float), 0.0, 1, True, 'admm', 0.1)


def test_one_standard_error_rule(tmp_path):
    fits = [_fit(np.zeros((1, 1))) for _ in range(4)]
    result = PathResult([4.0, 3.0, 2.0, 1.0], fits, [1] * 4,
                        cv_mean=np.array([5.0, 2.5, 2.0, 3.0]),
                        cv_se=np.array([0.1, 0.2, 0.6, 0.1]))
    assert result.best_index == 2
    assert result.best_lambda == 2.0
    assert result.one_se_lambda == 3.0

    path = str(tmp_path / 'cv.csv')
    result.write_cv(path)
    with open(path) as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == ['lambda', 'mean_error', 'standard_error']
    assert len(rows) == 5


def test_validation_select():
    x = np.array([[1.0], [2.0], [3.0], [4.0]])
    y = 2.0 * x
    train = center_and_normalize(y, x, normalize=False)
    fits = [_fit([[0.0]]), _fit([[2.0]]), _fit([[1.0]])]
    errors, best = validation_select(train, fits, y, x)
    assert best == 1
    assert errors[1] == pytest.approx(0.0, abs=1e-20)


def test_oracle_lambda_is_scale_free(make_data):
    data = make_data(25, 5, 3, seed=11)
    errors = np.random.default_rng(12).standard_normal((25, 3))
    lam = oracle_lambda(data, errors, 'lasso', c=1.01)
    assert lam == pytest.approx(oracle_lambda(data, 4.0 * errors + 1.0,
                                              'lasso', c=1.01))
    assert lam > 0.0
