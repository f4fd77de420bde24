"""Defines the Dataset class, which holds centered (and optionally
normalized) responses and predictors"""
import numpy as np

from pymsrl.lib.linalg.matrix import as_matrix, singular_values
from pymsrl.lib.utils import DataError


class Dataset(object):
    """Centered responses and predictors ready for fitting

    Coefficients fitted on a normalized Dataset live on the normalized
    scale; `to_raw_coefficients` and `intercept` map them back to the
    scale of the raw data.

    Attributes:
        y: centered responses (n x q)
        x: centered, possibly normalized predictors (n x p)
        normalized: whether predictor columns were rescaled to norm sqrt(n)
        column_scales: the divisor applied to each centered predictor
            column (all ones when not normalized)
        y_means: column means of the raw responses
        x_means: column means of the raw predictors
    """
    def __init__(self, y, x, normalized, column_scales, y_means, x_means):
        self.y = y
        self.x = x
        self.normalized = normalized
        self.column_scales = column_scales
        self.y_means = y_means
        self.x_means = x_means
        self._x_sq_norm = None

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def p(self):
        return self.x.shape[1]

    @property
    def q(self):
        return self.y.shape[1]

    @property
    def x_sq_norm(self):
        """||X'X||, the squared largest singular value of x, cached"""
        if self._x_sq_norm is None:
            d = singular_values(self.x)
            self._x_sq_norm = float(d[0] ** 2) if d.size else 0.0
        return self._x_sq_norm

    def to_raw_coefficients(self, b):
        """Maps normalized-scale coefficients back to the raw predictor
        scale"""
        return b / self.column_scales[:, np.newaxis]

    def from_raw_coefficients(self, b_raw):
        """Maps raw-scale coefficients onto the normalized scale"""
        return b_raw * self.column_scales[:, np.newaxis]

    def intercept(self, b_raw):
        """Intercept matching raw-scale coefficients: ybar - b' xbar"""
        return self.y_means - self.x_means.dot(b_raw)

    def predict(self, b, x_raw):
        """Predicts raw-scale responses for raw predictor rows from
        coefficients fitted on this dataset"""
        b_raw = self.to_raw_coefficients(b)
        return as_matrix(x_raw, 'x').dot(b_raw) + self.intercept(b_raw)

    def transform(self, y_raw, x_raw):
        """Centers and scales new raw rows with this dataset's statistics

        Args:
            y_raw: new responses (m x q), or None
            x_raw: new predictors (m x p)
        Returns:
            a tuple (y, x) of transformed arrays (y is None if y_raw is)
        """
        x = (as_matrix(x_raw, 'x') - self.x_means) / self.column_scales
        y = None
        if y_raw is not None:
            y = as_matrix(y_raw, 'y') - self.y_means
        return y, x

    def rows(self, index):
        """Gets a Dataset holding a subset of rows, re-centered and
        re-normalized on those rows alone

        The subset is treated as raw data on this dataset's scale, so the
        result's statistics are relative to this dataset.
        """
        return center_and_normalize(self.y[index], self.x[index],
                                    self.normalized)


def center_and_normalize(y_raw, x_raw, normalize=True):
    """Centers responses and predictors, optionally rescaling every
    predictor column to Euclidean norm sqrt(n)

    Args:
        y_raw: raw responses (n x q)
        x_raw: raw predictors (n x p)
        normalize: whether to rescale predictor columns
    Returns:
        a Dataset
    Raises:
        DataError: if the row counts differ, n < 2, or a predictor
            column has zero variance while normalizing
    """
    y_raw = as_matrix(y_raw, 'y')
    x_raw = as_matrix(x_raw, 'x')
    if y_raw.shape[0] != x_raw.shape[0]:
        raise DataError('x has %d rows but y has %d rows'
                        % (x_raw.shape[0], y_raw.shape[0]))
    n = x_raw.shape[0]
    if n < 2:
        raise DataError('at least two observations are needed, got %d' % n)

    y_means = y_raw.mean(axis=0)
    x_means = x_raw.mean(axis=0)
    y = y_raw - y_means
    x = x_raw - x_means

    scales = np.ones(x.shape[1])
    if normalize:
        norms = np.linalg.norm(x, axis=0)
        raw_norms = np.linalg.norm(x_raw, axis=0)

        # A centered column this small relative to its raw size is
        # constant up to rounding
        flat = norms <= 1e-10 * np.maximum(1.0, raw_norms)
        if np.any(flat):
            raise DataError('predictor column %d has zero variance and '
                            'cannot be normalized' % int(np.argmax(flat)))
        scales = norms / np.sqrt(n)
        x = x / scales

    return Dataset(y, x, normalize, scales, y_means, x_means)
