"""
Simulation designs: error covariance models, coefficient constructions,
predictor and error generation, and the metrics a fit is scored with
"""
import json
import logging

import numpy as np
from scipy import linalg

from pymsrl.lib.linalg.dataset import center_and_normalize
from pymsrl.lib.linalg.matrix import nuclear_norm
from pymsrl.lib.penalties import PenaltyKind
from pymsrl.lib.utils import ConfigError, make_rng

logger = logging.getLogger(__name__)

# Correlation between neighbouring predictors
AR_RHO = 0.5

# Nonzeros per column (elementwise) or nonzero rows (row sparse)
SUPPORT_SIZE = 5

T_DF = 5

ERROR_DISTS = ('normal', 't5')
T_SCALES = ('shape', 'covariance')


class CompoundSymmetry(object):
    """Sigma = 3 [(1 - xi) I + xi 11']

    Attributes:
        xi: the common correlation, in [0, 1)
    """
    name = 'compound_symmetry'

    def __init__(self, xi):
        self.xi = float(xi)
        if not 0.0 <= self.xi < 1.0:
            raise ConfigError('compound symmetry needs 0 <= xi < 1, got %r'
                              % self.xi)

    def sigma(self, q, rng):
        tilde = np.full((q, q), self.xi)
        np.fill_diagonal(tilde, 1.0)
        return 3.0 * tilde

    def params(self):
        return {'name': self.name, 'xi': self.xi}


class ConditionNumber(object):
    """Sigma = 2 O diag(1, ..., 1/cond) O' with O a Haar random orthogonal
    matrix and equally spaced eigenvalues

    Attributes:
        cond: the condition number, >= 1
    """
    name = 'condition_number'

    def __init__(self, cond):
        self.cond = float(cond)
        if not self.cond >= 1.0:
            raise ConfigError('the condition number must be at least 1, got '
                              '%r' % self.cond)

    def sigma(self, q, rng):
        o = random_orthogonal(q, rng)
        eigenvalues = np.linspace(1.0, 1.0 / self.cond, q)
        tilde = (o * eigenvalues).dot(o.T)
        tilde = (tilde + tilde.T) / 2.0
        return 2.0 * tilde

    def params(self):
        return {'name': self.name, 'cond': self.cond}


class Factor(object):
    """Sigma = R'R + 0.05 I where R is an r x q Gaussian matrix with
    columns rescaled so diag(R'R) = 1.45

    Attributes:
        r: the number of factors, 1 <= r <= q
    """
    name = 'factor'

    def __init__(self, r):
        self.r = int(r)
        if self.r < 1:
            raise ConfigError('the number of factors must be positive, got '
                              '%d' % self.r)

    def sigma(self, q, rng):
        if self.r > q:
            raise ConfigError('the number of factors (%d) cannot exceed q '
                              '(%d)' % (self.r, q))
        r_tilde = rng.standard_normal((self.r, q))
        r = r_tilde * (np.sqrt(1.45) / np.linalg.norm(r_tilde, axis=0))
        return r.T.dot(r) + 0.05 * np.eye(q)

    def params(self):
        return {'name': self.name, 'r': self.r}


MODELS = {
    CompoundSymmetry.name: (CompoundSymmetry, 'xi'),
    ConditionNumber.name: (ConditionNumber, 'cond'),
    Factor.name: (Factor, 'r'),
}


def model_from_dict(spec):
    """Builds a covariance model from {"name": ..., <parameter>: ...}

    Raises:
        ConfigError: for an unknown name or a missing parameter
    """
    try:
        cls, param = MODELS[spec['name']]
    except KeyError:
        raise ConfigError('unknown covariance model %r (expected one of: %s)'
                          % (spec.get('name'), ', '.join(sorted(MODELS))))
    if param not in spec:
        raise ConfigError('covariance model %s needs parameter %r'
                          % (spec['name'], param))
    return cls(spec[param])


def random_orthogonal(q, rng):
    """Haar distributed q x q orthogonal matrix: the QR factor of a
    Gaussian matrix with the signs of R's diagonal moved into Q"""
    z = rng.standard_normal((q, q))
    o, r = linalg.qr(z)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return o * signs


def make_sigma(model, q, rng=None):
    """The error covariance of a model

    Args:
        model: a CompoundSymmetry, ConditionNumber or Factor
        q: number of responses
        rng: Generator for the random parts of Models 2 and 3
    Returns:
        a symmetric positive definite q x q matrix
    """
    return model.sigma(q, make_rng(rng))


class BetaScheme(object):
    ELEMENTWISE = 'elementwise'
    ROW = 'row'

    ALL = (ELEMENTWISE, ROW)


def make_beta(scheme, p, q, rng):
    """Sparse true coefficients

    'elementwise': five randomly placed standard normal entries per
    column; 'row': five random rows with N(0, 0.1^2) entries.

    Raises:
        ConfigError: if p < 5 or the scheme is unknown
    """
    if scheme not in BetaScheme.ALL:
        raise ConfigError('unknown coefficient scheme %r (expected one of: '
                          '%s)' % (scheme, ', '.join(BetaScheme.ALL)))
    if p < SUPPORT_SIZE:
        raise ConfigError('the coefficient constructions need p >= %d, got '
                          '%d' % (SUPPORT_SIZE, p))

    beta = np.zeros((p, q))
    if scheme == BetaScheme.ELEMENTWISE:
        g = rng.standard_normal((p, q))
        for k in range(q):
            rows = rng.choice(p, SUPPORT_SIZE, replace=False)
            beta[rows, k] = g[rows, k]
    else:
        rows = rng.choice(p, SUPPORT_SIZE, replace=False)
        beta[rows] = rng.normal(0.0, 0.1, size=(SUPPORT_SIZE, q))
    return beta


class SimDesign(object):
    """One simulation setting

    Attributes:
        n, p, q: dimensions (validation set also has n rows)
        model: the covariance model
        error_dist: 'normal' or 't5'
        beta_scheme: 'elementwise' or 'row'
        seed: master seed
        reps: number of replications
        t_scale: for t5 errors, whether Sigma is the 'shape' matrix or the
            'covariance'
        penalty: the PenaltyKind fitted by the penalized methods
        nuclear_normalizer: divisor of the nuclear prediction error
        nlambda: grid size of the tuned methods
    """
    def __init__(self, n, p, q, model, error_dist='normal',
                 beta_scheme=BetaScheme.ELEMENTWISE, seed=0, reps=1,
                 t_scale='shape', penalty=None, nuclear_normalizer=1000.0,
                 nlambda=None):
        self.n, self.p, self.q = int(n), int(p), int(q)
        self.model = model
        self.error_dist = error_dist
        self.beta_scheme = beta_scheme
        self.seed = int(seed)
        self.reps = int(reps)
        self.t_scale = t_scale
        if penalty is None:
            penalty = (PenaltyKind.L1 if beta_scheme == BetaScheme.ELEMENTWISE
                       else PenaltyKind.GROUP)
        self.penalty = PenaltyKind.from_name(penalty)
        self.nuclear_normalizer = float(nuclear_normalizer)
        self.nlambda = nlambda

        if min(self.n, self.p, self.q) < 1:
            raise ConfigError('n, p and q must be positive')
        if self.reps < 1:
            raise ConfigError('reps must be positive')
        if error_dist not in ERROR_DISTS:
            raise ConfigError('unknown error distribution %r (expected one '
                              'of: %s)' % (error_dist, ', '.join(ERROR_DISTS)))
        if t_scale not in T_SCALES:
            raise ConfigError('t_scale must be one of: %s'
                              % ', '.join(T_SCALES))
        if isinstance(model, Factor) and model.r > self.q:
            raise ConfigError('the number of factors (%d) cannot exceed q '
                              '(%d)' % (model.r, self.q))
        if beta_scheme not in BetaScheme.ALL:
            raise ConfigError('unknown coefficient scheme %r' % beta_scheme)
        if self.nuclear_normalizer <= 0.0:
            raise ConfigError('nuclear_normalizer must be positive')

    @classmethod
    def from_dict(cls, spec):
        spec = dict(spec)
        try:
            model = model_from_dict(spec.pop('model'))
            return cls(model=model, **spec)
        except KeyError as err:
            raise ConfigError('design is missing field %s' % err)
        except TypeError as err:
            raise ConfigError('invalid design: %s' % err)

    @classmethod
    def from_json(cls, path):
        """Reads a design from a JSON file

        Raises:
            ConfigError: if the file is unreadable, not JSON or invalid
        """
        try:
            with open(path) as handle:
                spec = json.load(handle)
        except (OSError, ValueError) as err:
            raise ConfigError('cannot read design %s: %s' % (path, err))
        return cls.from_dict(spec)

    def to_dict(self):
        return {
            'n': self.n, 'p': self.p, 'q': self.q,
            'model': self.model.params(),
            'error_dist': self.error_dist,
            'beta_scheme': self.beta_scheme,
            'seed': self.seed,
            'reps': self.reps,
            't_scale': self.t_scale,
            'penalty': self.penalty.value,
            'nuclear_normalizer': self.nuclear_normalizer,
            'nlambda': self.nlambda,
        }


class SimInstance(object):
    """One generated training and validation set

    Attributes:
        data: the centered and normalized training Dataset
        validation: the centered and normalized validation Dataset
        x_train, y_train: raw training data
        x_val, y_val: raw validation data
        errors: the training error matrix
        beta_star: the true coefficients (p x q)
        sigma_star: the true error covariance (q x q)
        design: the SimDesign
    """
    def __init__(self, data, validation, x_train, y_train, x_val, y_val,
                 errors, beta_star, sigma_star, design):
        self.data = data
        self.validation = validation
        self.x_train = x_train
        self.y_train = y_train
        self.x_val = x_val
        self.y_val = y_val
        self.errors = errors
        self.beta_star = beta_star
        self.sigma_star = sigma_star
        self.design = design


def ar_predictors(n, p, rng):
    """Rows from N(0, S) with S_jk = 0.5^|j - k|, built column by column
    from the AR(1) recursion"""
    z = rng.standard_normal((n, p))
    x = np.empty((n, p))
    x[:, 0] = z[:, 0]
    innovation = np.sqrt(1.0 - AR_RHO ** 2)
    for j in range(1, p):
        x[:, j] = AR_RHO * x[:, j - 1] + innovation * z[:, j]
    return x


def make_errors(n, sigma, rng, dist='normal', t_scale='shape'):
    """Error rows with covariance (or t5 shape) sigma

    t5 rows are normal rows scaled by sqrt(5 / w), w ~ chi2(5); with
    t_scale 'covariance' they are scaled further so their covariance is
    sigma.
    """
    chol = linalg.cholesky(sigma, lower=True)
    e = rng.standard_normal((n, sigma.shape[0])).dot(chol.T)
    if dist == 't5':
        w = rng.chisquare(T_DF, size=n)
        e = e * np.sqrt(T_DF / w)[:, np.newaxis]
        if t_scale == 'covariance':
            e = e * np.sqrt((T_DF - 2.0) / T_DF)
    return e


def simulate(design, seed=None):
    """Generates one replication of a design

    Args:
        design: the SimDesign
        seed: overrides design.seed (an int, SeedSequence or Generator)
    Returns:
        a SimInstance
    """
    rng = make_rng(design.seed if seed is None else seed)
    n, p, q = design.n, design.p, design.q

    sigma = make_sigma(design.model, q, rng)
    beta = make_beta(design.beta_scheme, p, q, rng)

    x_train = ar_predictors(n, p, rng)
    errors = make_errors(n, sigma, rng, design.error_dist, design.t_scale)
    y_train = x_train.dot(beta) + errors

    x_val = ar_predictors(n, p, rng)
    y_val = x_val.dot(beta) + make_errors(n, sigma, rng, design.error_dist,
                                          design.t_scale)

    return SimInstance(center_and_normalize(y_train, x_train),
                       center_and_normalize(y_val, x_val),
                       x_train, y_train, x_val, y_val, errors, beta, sigma,
                       design)


class Metrics(object):
    """Scores of one estimate

    Attributes:
        frob_sq_error: ||b - beta*||_F^2 on the raw scale
        tpr: true positive selection rate
        fpr: false positive selection rate
        weighted_pred_error: ||(Y_val - Y_hat) L^-1||_F^2 / (n q), L the
            diagonal of response standard deviations
        nuclear_pred_error: ||Y_val - Y_hat||_* / normalizer
    """
    FIELDS = ('frob_sq_error', 'tpr', 'fpr', 'weighted_pred_error',
              'nuclear_pred_error')

    def __init__(self, frob_sq_error, tpr, fpr, weighted_pred_error,
                 nuclear_pred_error):
        self.frob_sq_error = frob_sq_error
        self.tpr = tpr
        self.fpr = fpr
        self.weighted_pred_error = weighted_pred_error
        self.nuclear_pred_error = nuclear_pred_error

    def as_dict(self):
        return dict((name, getattr(self, name)) for name in self.FIELDS)


def _rates(selected, truth):
    positives = np.sum(truth)
    negatives = truth.size - positives
    tpr = np.sum(selected & truth) / positives if positives else 0.0
    fpr = np.sum(selected & ~truth) / negatives if negatives else 0.0
    return float(tpr), float(fpr)


def evaluate(b_hat, instance, threshold=1e-8, normalizer=None):
    """Scores an estimate fitted on instance.data

    Selection rates count entries for the elementwise scheme and rows for
    the row scheme; an entry (row) is selected when its magnitude (largest
    magnitude) exceeds threshold.

    Args:
        b_hat: coefficients on the scale of instance.data
        instance: the SimInstance
        threshold: support threshold
        normalizer: nuclear prediction error divisor (design's if None)
    Returns:
        a Metrics
    """
    data = instance.data
    b_raw = data.to_raw_coefficients(b_hat)
    beta = instance.beta_star
    diff = b_raw - beta
    frob = float(np.sum(diff * diff))

    if instance.design.beta_scheme == BetaScheme.ROW:
        selected = np.max(np.abs(b_raw), axis=1) > threshold
        truth = np.max(np.abs(beta), axis=1) > 0.0
    else:
        selected = np.abs(b_raw) > threshold
        truth = beta != 0.0
    tpr, fpr = _rates(selected, truth)

    resid = instance.y_val - data.predict(b_hat, instance.x_val)
    scales = np.std(np.vstack([instance.y_train, instance.y_val]), axis=0,
                    ddof=1)
    weighted = resid / scales
    m, q = resid.shape
    normalizer = instance.design.nuclear_normalizer if normalizer is None \
        else normalizer
    return Metrics(frob, tpr, fpr,
                   float(np.sum(weighted * weighted) / (m * q)),
                   nuclear_norm(resid) / normalizer)
