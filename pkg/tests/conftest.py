import numpy as np
import pytest

from pymsrl.lib.admm import AdmmConfig
from pymsrl.lib.apgd import ApgdConfig
from pymsrl.lib.linalg.dataset import center_and_normalize


def _make_data(n, p, q, seed=0, active=2, noise=1.0, normalize=True,
               correlation=0.0):
    """Small random regression problem with `active` non-zero rows of
    coefficients and (optionally equicorrelated) Gaussian errors"""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, p))
    beta = np.zeros((p, q))
    beta[:active] = 1.0 + rng.standard_normal((active, q))
    cov = (1.0 - correlation) * np.eye(q) + correlation
    errors = rng.standard_normal((n, q)).dot(np.linalg.cholesky(cov).T)
    y = x.dot(beta) + noise * errors
    return center_and_normalize(y, x, normalize)


@pytest.fixture
def make_data():
    return _make_data


@pytest.fixture
def tight_admm():
    return AdmmConfig(eps_rel=1e-15, eps_abs=1e-15, max_iter=50000)


@pytest.fixture
def tight_apgd():
    return ApgdConfig(obj_tol=1e-14, max_iter=50000)
