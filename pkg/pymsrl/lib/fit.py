"""Holds the FitResult class shared by every solver and the objective
being minimized"""
import numpy as np

from pymsrl.lib.linalg.matrix import nuclear_norm
from pymsrl.lib.penalties import penalty_value


def objective(data, pen, b):
    """Evaluates the multivariate square-root lasso criterion

    Args:
        data: the Dataset
        pen: the PenaltySpec
        b: coefficient matrix (p x q)
    Returns:
        (1/sqrt(n)) ||Y - X b||_* + lam g(b)
    """
    resid = data.y - data.x.dot(b)
    return (nuclear_norm(resid) / np.sqrt(data.n) +
            pen.lam * penalty_value(pen.kind, b))


class FitResult(object):
    """The estimate returned by a solver together with its diagnostics

    Attributes:
        b_hat: coefficient estimate (p x q), on the Dataset's scale
        objective: the solver's criterion at b_hat
        iterations: number of iterations run
        converged: whether the stopping rule was met
        solver: 'admm', 'apgd', 'pls' or 'calibrated'
        lam: the tuning parameter that was used
        primal_residuals: per-iteration primal residual history
        dual_residuals: per-iteration dual residual history
        rho_final: the ADMM step size at termination (None for others)
        state: the terminal SolverState for warm starts (ADMM only)
        history: optional list of per-iteration diagnostic records
    """
    def __init__(self, b_hat, objective, iterations, converged, solver,
                 lam, primal_residuals=None, dual_residuals=None,
                 rho_final=None, state=None, history=None):
        self.b_hat = b_hat
        self.objective = objective
        self.iterations = iterations
        self.converged = converged
        self.solver = solver
        self.lam = lam
        self.primal_residuals = primal_residuals or []
        self.dual_residuals = dual_residuals or []
        self.rho_final = rho_final
        self.state = state
        self.history = history

    @property
    def nonzeros(self):
        """Number of non-zero coefficient entries"""
        return int(np.count_nonzero(self.b_hat))

    def summary(self):
        """A JSON-ready dictionary of the scalar diagnostics"""
        return {
            'lambda': self.lam,
            'objective': self.objective,
            'iterations': self.iterations,
            'converged': bool(self.converged),
            'solver': self.solver,
            'nonzeros': self.nonzeros,
        }

    def __repr__(self):
        return ('FitResult(solver=%s, lam=%g, objective=%.6g, '
                'iterations=%d, converged=%s)'
                % (self.solver, self.lam, self.objective, self.iterations,
                   self.converged))
