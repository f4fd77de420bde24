"""
Optimality and identity checks: the KKT residual of a fit, the weighted
residual sum of squares form of the nuclear norm, and local minimality
in the joint coefficient and covariance criterion
"""
import numpy as np
from scipy import linalg

from pymsrl.lib.linalg.matrix import nuclear_norm, sym_power, thin_svd
from pymsrl.lib.penalties import PenaltyKind, penalty_value
from pymsrl.lib.utils import DataError, RankDeficient, make_rng

# Singular values of b at or below this are treated as zero
SUPPORT_TOL = 1e-10


def _full_rank_residual(data, b, rank_tol):
    """Thin SVD of Y - X b, refusing rank deficient residuals"""
    if data.n <= data.q:
        raise DataError('the smooth optimality conditions need n > q '
                        '(n=%d, q=%d)' % (data.n, data.q))
    svd = thin_svd(data.y - data.x.dot(b))
    if svd.rank(rank_tol) < data.q:
        raise RankDeficient('the residual has fewer than q non-zero singular '
                            'values; optimality there involves the '
                            'subgradient of the nuclear norm, which this '
                            'check does not certify; compare objectives '
                            'across solvers instead')
    return svd


def _row_norms(a):
    return np.sqrt(np.sum(a * a, axis=1))


def subgradient_gap(kind, lam, b, g):
    """Distance from g to lam times the subdifferential of g(.) at b

    On the support of b the gap is the deviation of g from the
    subgradient fixed there; off it, how far g leaves the dual ball of
    radius lam. Singular values of b at or below SUPPORT_TOL count as zero
    for the nuclear penalty.

    Args:
        kind: the PenaltyKind
        lam: the tuning parameter
        b: the coefficients
        g: the negative gradient of the smooth part of the criterion at b
    Returns:
        the largest violation (0 when g is a valid subgradient)
    """
    kind = PenaltyKind.from_name(kind)
    if kind is PenaltyKind.L1:
        on = b != 0.0
        gap = np.where(on, np.abs(g - lam * np.sign(b)),
                       np.maximum(np.abs(g) - lam, 0.0))
        return float(np.max(gap))

    if kind is PenaltyKind.GROUP:
        norms = _row_norms(b)
        on = norms > 0.0
        gaps = np.maximum(_row_norms(g) - lam, 0.0)
        if np.any(on):
            direction = b[on] / norms[on][:, np.newaxis]
            gaps[on] = _row_norms(g[on] - lam * direction)
        return float(np.max(gaps))

    # Rotate g into the singular bases of b: the support block must be
    # lam I, the cross blocks zero and the rest have spectral norm <= lam
    u, d, vt = linalg.svd(b, full_matrices=True)
    r = int(np.sum(d > SUPPORT_TOL))
    rotated = u.T.dot(g).dot(vt.T)
    gaps = [0.0]
    if r:
        gaps.append(np.max(np.abs(rotated[:r, :r] - lam * np.eye(r))))
        if rotated.shape[1] > r:
            gaps.append(np.max(np.abs(rotated[:r, r:])))
        if rotated.shape[0] > r:
            gaps.append(np.max(np.abs(rotated[r:, :r])))
    rest = rotated[r:, r:]
    if rest.size:
        gaps.append(max(linalg.svdvals(rest)[0] - lam, 0.0))
    return float(max(gaps))


def kkt_residual(data, pen, b, rank_tol=1e-8):
    """Distance from (1/sqrt(n)) X'R(R'R)^(-1/2) to lam times the
    subdifferential of g at b

    Args:
        data: the Dataset
        pen: the PenaltySpec
        b: the coefficients to check
        rank_tol: relative rank tolerance for the residual
    Returns:
        the largest violation of the optimality conditions (0 at an exact
        solution)
    Raises:
        RankDeficient: if the residual has fewer than q non-zero singular
            values
        DataError: if n <= q
    """
    svd = _full_rank_residual(data, b, rank_tol)
    g = data.x.T.dot(svd.polar()) / np.sqrt(data.n)
    return subgradient_gap(pen.kind, pen.lam, b, g)


def least_squares_kkt_residual(data, pen, b):
    """Distance from (1/n) X'(Y - X b) to lam times the subdifferential of
    g at b, the optimality gap of penalized least squares"""
    g = data.x.T.dot(data.y - data.x.dot(b)) / data.n
    return subgradient_gap(pen.kind, pen.lam, b, g)


def weighted_rss_identity(data, b):
    """Both sides of the weighted residual sum of squares form of the
    nuclear norm of residuals

    Returns:
        a tuple ((1/sqrt(n)) ||R||_*, tr{(1/n) R S^+ R'}) with
        S = (1/sqrt(n)) (R'R)^(1/2) and S^+ its pseudoinverse
    """
    resid = data.y - data.x.dot(b)
    n = data.n
    lhs = nuclear_norm(resid) / np.sqrt(n)
    weight_pinv = np.sqrt(n) * sym_power(resid.T.dot(resid), -0.5)
    rhs = float(np.sum(resid.dot(weight_pinv) * resid)) / n
    return lhs, rhs


def joint_objective(data, pen, b, sqrt_sigma):
    """(1/2n) tr{R S^-1 R'} + tr(S)/2 + lam g(b) for a positive definite
    S = sqrt_sigma"""
    resid = data.y - data.x.dot(b)
    weighted = linalg.solve(sqrt_sigma, resid.T, assume_a='pos')
    return (float(np.sum(resid.T * weighted)) / (2.0 * data.n) +
            np.trace(sqrt_sigma) / 2.0 + pen.lam * penalty_value(pen.kind, b))


class JointCheckReport(object):
    """Outcome of the joint-criterion perturbation test

    Attributes:
        objective: the joint objective at (b_hat, residual covariance^1/2)
        violations: perturbations that lowered it beyond tolerance
        max_violation: the largest such decrease (0 if none)
        trials: number of perturbations tried
        scale: perturbation size
    """
    def __init__(self, objective, violations, max_violation, trials, scale):
        self.objective = objective
        self.violations = violations
        self.max_violation = max_violation
        self.trials = trials
        self.scale = scale

    def as_dict(self):
        return {'objective': self.objective, 'violations': self.violations,
                'max_violation': self.max_violation, 'trials': self.trials,
                'scale': self.scale}


def _unit(a):
    norm = np.linalg.norm(a)
    return a / norm if norm > 0.0 else a


def lemma1_check(data, pen, b_hat, trials=200, rng=None, scale=1e-2,
                 rank_tol=1e-8, rel_tol=1e-9):
    """Checks that (b_hat, Sigma^1/2) with Sigma = R'R / n locally
    minimizes the joint coefficient and covariance criterion

    Each trial perturbs both arguments: S' = (I + eA) S (I + eA)' and
    b' = b_hat + eD, with A and D Gaussian of unit Frobenius norm and e the
    scale. A trial is a violation when it lowers the criterion by more
    than rel_tol (1 + objective).

    Args:
        data: the Dataset
        pen: the PenaltySpec b_hat was fitted with
        b_hat: the fitted coefficients
        trials: number of perturbations
        rng: seed or Generator
        scale: perturbation size
        rank_tol: relative rank tolerance for the residual
        rel_tol: relative decrease counted as a violation
    Returns:
        a JointCheckReport
    Raises:
        RankDeficient: if the residual has fewer than q non-zero singular
            values
    """
    rng = make_rng(rng)
    _full_rank_residual(data, b_hat, rank_tol)
    resid = data.y - data.x.dot(b_hat)
    sqrt_sigma = sym_power(resid.T.dot(resid) / data.n, 0.5)
    base = joint_objective(data, pen, b_hat, sqrt_sigma)
    limit = rel_tol * (1.0 + abs(base))

    q = data.q
    violations = 0
    worst = 0.0
    for _ in range(trials):
        a = _unit(rng.standard_normal((q, q)))
        delta = _unit(rng.standard_normal(b_hat.shape))
        left = np.eye(q) + scale * a
        moved = joint_objective(data, pen, b_hat + scale * delta,
                                left.dot(sqrt_sigma).dot(left.T))
        drop = base - moved
        if drop > limit:
            violations += 1
            worst = max(worst, drop)
    return JointCheckReport(base, violations, worst, trials, scale)
