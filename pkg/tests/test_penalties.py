import numpy as np
import pytest
from numpy.testing import assert_allclose

from pymsrl.lib.penalties import PenaltyKind, PenaltySpec, dual_norm, \
    penalty_value, prox
from pymsrl.lib.utils import ConfigError

KINDS = list(PenaltyKind)


def test_penalty_values():
    a = np.array([[1.0, -2.0], [0.0, 3.0]])
    assert penalty_value(PenaltyKind.L1, a) == pytest.approx(6.0)
    assert penalty_value(PenaltyKind.GROUP, np.array([[3.0, 4.0],
                                                      [0.0, 0.0]])) == \
        pytest.approx(5.0)
    assert penalty_value(PenaltyKind.NUCLEAR, np.diag([2.0, 5.0])) == \
        pytest.approx(7.0)
    for kind in KINDS:
        assert penalty_value(kind, np.zeros((3, 2))) == 0.0


def test_dual_norms():
    a = np.array([[1.0, -2.0], [0.0, 3.0]])
    assert dual_norm(PenaltyKind.L1, a) == pytest.approx(3.0)
    assert dual_norm(PenaltyKind.GROUP, np.array([[3.0, 4.0],
                                                  [0.0, 0.0]])) == \
        pytest.approx(5.0)
    assert dual_norm(PenaltyKind.NUCLEAR, np.diag([2.0, 5.0])) == \
        pytest.approx(5.0)


def test_duality_inequality():
    rng = np.random.default_rng(0)
    for kind in KINDS:
        for _ in range(100):
            a = rng.standard_normal((4, 3))
            b = rng.standard_normal((4, 3))
            assert np.sum(a * b) <= penalty_value(kind, a) * \
                dual_norm(kind, b) + 1e-10


def test_prox_examples():
    assert_allclose(prox(PenaltyKind.L1, np.array([[1.0, -0.2]]), 0.5),
                    [[0.5, 0.0]])
    assert_allclose(prox(PenaltyKind.NUCLEAR, np.diag([3.0, 1.0]), 1.0),
                    np.diag([2.0, 0.0]), atol=1e-12)
    assert_allclose(prox(PenaltyKind.GROUP, np.array([[3.0, 4.0]]), 10.0),
                    [[0.0, 0.0]])
    assert_allclose(prox(PenaltyKind.GROUP, np.array([[3.0, 4.0],
                                                      [0.0, 0.0]]), 2.5),
                    [[1.5, 2.0], [0.0, 0.0]])


def test_prox_zero_threshold_is_identity():
    a = np.random.default_rng(1).standard_normal((3, 4))
    for kind in KINDS:
        assert_allclose(prox(kind, a, 0.0), a)


def test_prox_minimizes_its_objective():
    rng = np.random.default_rng(2)
    for kind in KINDS:
        for _ in range(20):
            a = rng.standard_normal((4, 3))
            t = rng.uniform(0.1, 1.5)
            x = prox(kind, a, t)

            def value(z):
                return 0.5 * np.sum((a - z) ** 2) + t * penalty_value(kind, z)

            best = value(x)
            for _ in range(20):
                step = rng.standard_normal(a.shape)
                step *= 1e-3 / np.linalg.norm(step)
                assert best <= value(x + step) + 1e-12


def test_prox_is_nonexpansive():
    rng = np.random.default_rng(3)
    for kind in KINDS:
        for _ in range(50):
            a = rng.standard_normal((4, 3))
            b = rng.standard_normal((4, 3))
            t = rng.uniform(0.0, 2.0)
            assert np.linalg.norm(prox(kind, a, t) - prox(kind, b, t)) <= \
                np.linalg.norm(a - b) + 1e-12


@pytest.mark.parametrize('kind', KINDS)
def test_prox_shrinks_the_penalty(kind):
    rng = np.random.default_rng(4)
    for _ in range(200):
        a = rng.standard_normal((5, 3)) * rng.uniform(0.1, 3.0)
        previous = penalty_value(kind, a)
        for t in (0.0, 0.1, 0.5, 1.0, 5.0):
            value = penalty_value(kind, prox(kind, a, t))
            assert value <= previous + 1e-12
            previous = value


def test_errors():
    with pytest.raises(ConfigError):
        PenaltyKind.from_name('ridge')
    with pytest.raises(ConfigError):
        PenaltySpec('lasso', -1.0)
    with pytest.raises(ConfigError):
        PenaltySpec('lasso', float('inf'))
    with pytest.raises(ConfigError):
        prox(PenaltyKind.L1, np.ones((2, 2)), -0.1)
    assert PenaltySpec('NUCLEAR', 0.5).kind is PenaltyKind.NUCLEAR
