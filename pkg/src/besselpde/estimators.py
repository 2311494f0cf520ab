"""scikit-learn style wrappers around the semigroup and the Picard solver."""

from __future__ import annotations

import warnings

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import ConvergenceWarning
from sklearn.utils.validation import check_array, check_is_fitted

from . import semigroup, solver
from .expr import compile_expression
from .mspace import default_x_max, even_bump, make_grid

__all__ = ["BesselSemigroup", "PicardSolver"]


class BesselSemigroup(TransformerMixin, BaseEstimator):
    """Apply ``P_t`` to functions sampled on a grid.

    Each row of ``X`` holds one function's values at ``nodes_``; ``transform``
    returns the rows of ``P_t f`` (or of ``(P_t f)'`` with ``derivative=True``).

    Parameters
    ----------
    delta : float
        Dimension in (0, 1).
    t : float
        Time; ``t = 0`` is the identity.
    n : int
        Number of grid cells.
    x_max : float or None
        Truncation point; ``None`` uses the truncation rule with ``support_radius``.
    """

    def __init__(
        self,
        delta=0.5,
        t=1.0,
        n=512,
        x_max=None,
        support_radius=4.0,
        scheme="graded",
        derivative=False,
    ):
        self.delta = delta
        self.t = t
        self.n = n
        self.x_max = x_max
        self.support_radius = support_radius
        self.scheme = scheme
        self.derivative = derivative

    def fit(self, X=None, y=None):
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.t < 0:
            raise ValueError("t must be non-negative")
        x_max = self.x_max or default_x_max(max(self.t, 1e-3), self.support_radius)
        self.grid_ = make_grid(self.delta, x_max, self.n, self.scheme)
        self.nodes_ = self.grid_.nodes
        self.n_features_in_ = len(self.grid_)
        params = semigroup.KernelParams(self.delta)
        if self.t == 0:
            self.operator_ = np.eye(len(self.grid_))
            if self.derivative:
                raise ValueError("the derivative form needs t > 0")
        elif self.derivative:
            rows = semigroup._dx_rows(params, self.t, self.grid_)
            self.operator_ = rows * self.grid_.mu_weights[None, :]
        else:
            km = semigroup.build_kernel_matrix(params, self.t, self.grid_)
            self.operator_ = km.operator()
            self.diagnostics_ = km.diagnostics()
        if X is not None:
            self._check_X(X)
        return self

    def _check_X(self, X):
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} columns; expected one per grid node ({self.n_features_in_})"
            )
        return X

    def transform(self, X):
        check_is_fitted(self, "operator_")
        X = self._check_X(X)
        return X @ self.operator_.T

    def sample(self, func):
        """Values of ``func`` at the grid nodes, shaped as one row of ``X``."""
        check_is_fitted(self, "grid_")
        return np.asarray(func(self.nodes_), dtype=float)[None, :]


class PicardSolver(BaseEstimator):
    """Solve the semilinear backward problem by Picard iteration.

    ``fit`` runs the solver; ``predict`` interpolates ``u`` at rows ``(t, x)``.
    ``f`` is either a preset name (``zero``, ``linear``, ``sin``,
    ``u_plus_du``) or an expression in ``t, x, u, v`` (``v`` stands for
    ``du/dx``), in which case ``lipschitz_c`` is required.
    """

    def __init__(
        self,
        delta=0.5,
        T=1.0,
        f="sin",
        lipschitz_c=None,
        terminal=None,
        n=256,
        n_steps=64,
        tol=1e-6,
        max_iter=30,
        lam=None,
        quadrature="midpoint",
        support_radius=4.0,
    ):
        self.delta = delta
        self.T = T
        self.f = f
        self.lipschitz_c = lipschitz_c
        self.terminal = terminal
        self.n = n
        self.n_steps = n_steps
        self.tol = tol
        self.max_iter = max_iter
        self.lam = lam
        self.quadrature = quadrature
        self.support_radius = support_radius

    def _nonlinearity(self):
        if callable(self.f):
            fn, c = self.f, self.lipschitz_c
        elif self.f in solver.PRESETS:
            fn, c = solver.preset(self.f)
            c = self.lipschitz_c or c
        else:
            fn, c = compile_expression(self.f), self.lipschitz_c
        if c is None:
            raise ValueError("lipschitz_c is required for a custom nonlinearity")
        return fn, c

    def fit(self, X=None, y=None):
        fn, c = self._nonlinearity()
        self.grid_ = make_grid(self.delta, default_x_max(self.T, self.support_radius), self.n)
        if self.terminal is None:
            cut = even_bump(min(self.support_radius or self.grid_.x_max / 2, self.grid_.x_max / 2))
            g = self.grid_.sample(lambda x: np.exp(-0.5 * x * x) * cut.f(x))
        else:
            g = self.grid_.sample(self.terminal)
        self.problem_ = solver.SemilinearProblem(self.T, self.delta, g, fn, c)
        mesh = solver.TimeMesh.uniform(self.T, self.n_steps)
        self.solution_, self.report_ = solver.solve(
            self.problem_,
            mesh,
            self.grid_,
            tol=self.tol,
            max_iter=self.max_iter,
            lam=self.lam,
            quadrature=self.quadrature,
        )
        self.converged_ = self.report_.converged
        self.n_iter_ = self.report_.iterations
        if not self.converged_:
            warnings.warn(
                f"Picard iteration stopped after {self.n_iter_} sweeps without converging",
                ConvergenceWarning,
            )
        self._interp = RegularGridInterpolator(
            (mesh.times, self.grid_.nodes), self.solution_.values, bounds_error=False, fill_value=None
        )
        return self

    def predict(self, X):
        """``u(t, x)`` for rows ``(t, x)`` with ``0 <= t <= T`` and ``x >= 0``.

        Points beyond the truncated domain return 0.
        """
        check_is_fitted(self, "solution_")
        X = check_array(X)
        if X.shape[1] != 2:
            raise ValueError("X must have two columns (t, x)")
        t, x = X[:, 0], X[:, 1]
        if np.any(t < 0) or np.any(t > self.T) or np.any(x < 0):
            raise ValueError("need 0 <= t <= T and x >= 0")
        out = self._interp(X)
        return np.where(x <= self.grid_.x_max, out, 0.0)
