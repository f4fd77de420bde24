"""
Dense matrix helpers, the thin singular value decomposition and the
matrix norms every solver is built on
"""
import logging

import numpy as np
from scipy import linalg

from pymsrl.lib.utils import DataError, NumericalError

logger = logging.getLogger(__name__)


def as_matrix(a, name='matrix'):
    """Validates and converts input into a finite 2-D float array

    One dimensional input is treated as a single column.

    Args:
        a: array-like input
        name: how to refer to the input in error messages
    Returns:
        a float64 ndarray with at least one row and one column
    Raises:
        DataError: if the input is empty, has more than two dimensions,
            or contains non-finite entries
    """
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, np.newaxis]
    if a.ndim != 2:
        raise DataError('%s must be two dimensional, got %d dimensions'
                        % (name, a.ndim))
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise DataError('%s must have at least one row and one column, '
                        'got shape %s' % (name, a.shape))
    if not np.all(np.isfinite(a)):
        raise DataError('%s contains non-finite entries' % name)
    return a


class ThinSvd(object):
    """A thin singular value decomposition a = u diag(d) v'

    Attributes:
        u: left singular vectors (a x s)
        d: singular values, non-negative and non-increasing (s,)
        v: right singular vectors (b x s)
    """
    def __init__(self, u, d, v):
        self.u = u
        self.d = d
        self.v = v

    def reconstruct(self):
        """Multiplies the factors back together

        Returns:
            u diag(d) v'
        """
        return (self.u * self.d).dot(self.v.T)

    def rank(self, rel_tol):
        """Counts the singular values above rel_tol times the largest one

        Args:
            rel_tol: relative tolerance
        Returns:
            the numerical rank
        """
        if self.d.size == 0 or self.d[0] <= 0.0:
            return 0
        return int(np.sum(self.d > rel_tol * self.d[0]))

    def polar(self, rel_tol=None):
        """Gets the orthogonal factor u v'

        Args:
            rel_tol: if given, only singular directions with singular
                value above rel_tol times the largest are used
        Returns:
            u v' restricted to the selected directions
        """
        if rel_tol is None:
            return self.u.dot(self.v.T)
        r = self.rank(rel_tol)
        return self.u[:, :r].dot(self.v[:, :r].T)


def thin_svd(a):
    """Computes the thin SVD of a matrix with a deterministic sign
    convention

    The signs are fixed so that the largest-magnitude entry of every left
    singular vector is positive.

    Args:
        a: a finite 2-D array
    Returns:
        a ThinSvd
    Raises:
        NumericalError: if LAPACK fails to converge with both drivers
    """
    a = np.asarray(a, dtype=float)
    try:
        u, d, vt = linalg.svd(a, full_matrices=False, check_finite=False,
                              lapack_driver='gesdd')
    except linalg.LinAlgError:
        # gesdd occasionally fails on nearly degenerate input, gesvd is
        # slower but more robust
        logger.debug('gesdd failed on a %s matrix, retrying with gesvd',
                     a.shape)
        try:
            u, d, vt = linalg.svd(a, full_matrices=False, check_finite=False,
                                  lapack_driver='gesvd')
        except linalg.LinAlgError as err:
            raise NumericalError('SVD of a %dx%d matrix did not converge: %s'
                                 % (a.shape[0], a.shape[1], err))

    v = vt.T
    if u.size:
        # Flip each pair of singular vectors so the largest-magnitude
        # entry of the left vector is positive
        pivots = np.argmax(np.abs(u), axis=0)
        signs = np.sign(u[pivots, np.arange(u.shape[1])])
        signs[signs == 0] = 1.0
        u = u * signs
        v = v * signs
    return ThinSvd(u, d, v)


def singular_values(a):
    """Singular values of a matrix in non-increasing order"""
    try:
        return linalg.svdvals(np.asarray(a, dtype=float), check_finite=False)
    except linalg.LinAlgError as err:
        raise NumericalError('singular values did not converge: %s' % err)


def nuclear_norm(a):
    """The sum of the singular values of a matrix"""
    return float(np.sum(singular_values(a)))


def spectral_norm(a):
    """The largest singular value of a matrix"""
    d = singular_values(a)
    return float(d[0]) if d.size else 0.0


def frobenius_norm(a):
    """The Frobenius norm of a matrix"""
    return float(np.linalg.norm(a))


def sym_power(s, power, clip=1e-12):
    """Raises a symmetric positive semi-definite matrix to a power through
    its eigen-decomposition

    Eigenvalues at or below clip times max(1, largest eigenvalue) are
    treated as zero; for negative powers they stay zero, which gives the
    Moore-Penrose pseudoinverse branch.

    Args:
        s: a symmetric PSD matrix
        power: the exponent, e.g. 0.5 or -0.5
        clip: relative eigenvalue floor
    Returns:
        s ** power as a symmetric matrix
    """
    w, q = linalg.eigh((s + s.T) / 2.0, check_finite=False)
    floor = clip * max(1.0, float(np.max(np.abs(w))) if w.size else 1.0)
    keep = w > floor
    scaled = np.zeros_like(w)
    scaled[keep] = w[keep] ** power
    return (q * scaled).dot(q.T)


def read_matrix(path, name=None):
    """Reads a headerless comma-separated matrix file

    Args:
        path: file to read
        name: how to refer to the matrix in errors (defaults to the path)
    Returns:
        a validated 2-D float array
    Raises:
        DataError: if the file is unreadable or malformed
    """
    name = name or str(path)
    try:
        a = np.loadtxt(path, delimiter=',', ndmin=2)
    except (OSError, ValueError) as err:
        raise DataError('cannot read matrix %s: %s' % (name, err))
    return as_matrix(a, name)


def write_matrix(path, a):
    """Writes a matrix as headerless comma-separated values with full
    double precision, one row per line"""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    np.savetxt(path, a, delimiter=',', fmt='%.17g')
