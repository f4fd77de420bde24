"""
The three coefficient penalties (entrywise L1, row-group L1 and nuclear
norm), their dual norms and their proximal operators
"""
from enum import Enum

import numpy as np

from pymsrl.lib.linalg.matrix import singular_values, thin_svd
from pymsrl.lib.utils import ConfigError


class PenaltyKind(Enum):
    """The supported penalties, named the way the command line names them

    GROUP groups are exactly the rows of the coefficient matrix.
    """
    L1 = 'lasso'
    GROUP = 'group'
    NUCLEAR = 'nuclear'

    @staticmethod
    def from_name(name):
        """Looks up a penalty by its command line name

        Raises:
            ConfigError: if the name is unknown
        """
        if isinstance(name, PenaltyKind):
            return name
        try:
            return PenaltyKind(str(name).lower())
        except ValueError:
            valid = ', '.join(kind.value for kind in PenaltyKind)
            raise ConfigError('unknown penalty %r (expected one of: %s)'
                              % (name, valid))


class PenaltySpec(object):
    """A penalty together with its tuning parameter

    Attributes:
        kind: the PenaltyKind
        lam: the tuning parameter, finite and non-negative
    """
    def __init__(self, kind, lam):
        self.kind = PenaltyKind.from_name(kind)
        lam = float(lam)
        if not np.isfinite(lam) or lam < 0.0:
            raise ConfigError('lambda must be finite and non-negative, '
                              'got %r' % lam)
        self.lam = lam

    def value(self, b):
        """lam * g(b)"""
        return self.lam * penalty_value(self.kind, b)

    def __repr__(self):
        return 'PenaltySpec(%s, %g)' % (self.kind.value, self.lam)


def _row_norms(a):
    return np.sqrt(np.sum(a * a, axis=1))


def penalty_value(kind, b):
    """Evaluates g(b)

    Args:
        kind: the PenaltyKind
        b: coefficient matrix
    Returns:
        sum of absolute entries (L1), sum of row norms (GROUP) or sum of
        singular values (NUCLEAR)
    """
    if kind is PenaltyKind.L1:
        return float(np.sum(np.abs(b)))
    if kind is PenaltyKind.GROUP:
        return float(np.sum(_row_norms(b)))
    return float(np.sum(singular_values(b)))


def dual_norm(kind, a):
    """Evaluates the dual norm of g at a

    Args:
        kind: the PenaltyKind
        a: a matrix
    Returns:
        max absolute entry (L1), max row norm (GROUP) or the spectral
        norm (NUCLEAR)
    """
    if kind is PenaltyKind.L1:
        return float(np.max(np.abs(a)))
    if kind is PenaltyKind.GROUP:
        return float(np.max(_row_norms(a)))
    d = singular_values(a)
    return float(d[0]) if d.size else 0.0


def soft_threshold(a, threshold):
    """Entrywise soft-thresholding sign(a) max(|a| - threshold, 0)"""
    return np.sign(a) * np.maximum(np.abs(a) - threshold, 0.0)


def prox(kind, a, threshold):
    """Proximal operator of threshold * g

    Returns the minimizer of (1/2)||a - x||_F^2 + threshold g(x).

    Args:
        kind: the PenaltyKind
        a: the point to shrink
        threshold: non-negative shrinkage amount
    Returns:
        the shrunken matrix (a new array)
    Raises:
        ConfigError: if threshold is negative
    """
    if threshold < 0.0:
        raise ConfigError('prox threshold must be non-negative, got %r'
                          % threshold)
    if threshold == 0.0:
        return np.array(a, dtype=float)

    if kind is PenaltyKind.L1:
        return soft_threshold(a, threshold)

    if kind is PenaltyKind.GROUP:
        norms = _row_norms(a)
        # Zero rows map to zero rows without dividing by their norm
        factor = np.zeros_like(norms)
        live = norms > threshold
        factor[live] = 1.0 - threshold / norms[live]
        return a * factor[:, np.newaxis]

    svd = thin_svd(a)
    shrunk = np.maximum(svd.d - threshold, 0.0)
    keep = shrunk > 0.0
    return (svd.u[:, keep] * shrunk[keep]).dot(svd.v[:, keep].T)
