"""scikit-learn style wrappers: parameters in __init__, work in fit."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils import check_array
from sklearn.utils.validation import check_is_fitted

from .concentrate import ScanConfig, scan_concentration
from .integrate import SolverConfig, rho_prime_accelerated_batch, rho_prime_direct_batch
from .potential import PotentialSpec
from .symbolic import DEFAULT_EPSILON_ORDER, DEFAULT_GUARD, DEFAULT_MAX_DEGREE, expand

__all__ = ["ConcentrationScanner", "SpectralDensity", "check_mu_array"]


def check_mu_array(mu) -> np.ndarray:
    """Validate a vector (or single column) of positive spectral parameters."""
    arr = check_array(np.asarray(mu, dtype=float).reshape(-1, 1) if np.ndim(mu) <= 1 else mu,
                      dtype=float, ensure_all_finite=True)
    if arr.shape[1] != 1:
        raise ValueError(f"expected one column of mu values, got {arr.shape[1]}")
    arr = arr[:, 0]
    if np.any(arr <= 0):
        raise ValueError("mu must be positive")
    return arr


class SpectralDensity(TransformerMixin, BaseEstimator):
    """rho'(mu) for q = -c (1+x)^-a cos x.

    ``fit`` builds the accelerated expansion; ``predict`` maps mu values to
    rho'.  ``method="direct"`` integrates the raw integrand up to ``x_max``
    instead, and is the only method accepting ``bc_angle``.
    """

    def __init__(self, a=2.0, c=1.0, epsilon_order=DEFAULT_EPSILON_ORDER,
                 max_degree=DEFAULT_MAX_DEGREE, x_max=100.0, method="accelerated",
                 bc_angle=None, guard=DEFAULT_GUARD, rel_tol=1e-9, abs_tol=1e-11, max_step=0.1):
        self.a = a
        self.c = c
        self.epsilon_order = epsilon_order
        self.max_degree = max_degree
        self.x_max = x_max
        self.method = method
        self.bc_angle = bc_angle
        self.guard = guard
        self.rel_tol = rel_tol
        self.abs_tol = abs_tol
        self.max_step = max_step

    def _solver(self):
        return SolverConfig(x_max=self.x_max, rel_tol=self.rel_tol, abs_tol=self.abs_tol,
                            max_step=self.max_step)

    def fit(self, X=None, y=None):
        if self.method not in ("accelerated", "direct"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.bc_angle is not None and self.method != "direct":
            raise ValueError("a boundary angle requires method='direct'")
        self.spec_ = PotentialSpec(float(self.c), float(self.a))
        self.expansion_ = (expand(self.spec_, self.epsilon_order, self.max_degree)
                           if self.method == "accelerated" else None)
        self.solver_ = self._solver()
        return self

    def predict(self, mu):
        check_is_fitted(self, "spec_")
        mus = check_mu_array(mu)
        if self.method == "accelerated":
            rho, _ = rho_prime_accelerated_batch(self.expansion_, self.spec_, mus, self.solver_, self.guard)
        else:
            rho, _ = rho_prime_direct_batch(self.spec_, mus, self.x_max, self.bc_angle, self.solver_)
        return rho

    def transform(self, X):
        return self.predict(X).reshape(-1, 1)

    def i0(self, mu):
        """The converged oscillatory integral for each mu."""
        check_is_fitted(self, "spec_")
        mus = check_mu_array(mu)
        if self.method == "accelerated":
            return rho_prime_accelerated_batch(self.expansion_, self.spec_, mus, self.solver_, self.guard)[1]
        return rho_prime_direct_batch(self.spec_, mus, self.x_max, self.bc_angle, self.solver_)[1]


class ConcentrationScanner(BaseEstimator):
    """Concentration points in [mu_min, mu_max]; results in ``points_``."""

    def __init__(self, a=2.0, c=1.0, mu_min=0.05, mu_max=5.0, mu_step=0.01, refine_tol=5e-3,
                 r_max=2, x_max=100.0, weight_exponent=0.5, require_transition=None,
                 epsilon_order=DEFAULT_EPSILON_ORDER, max_degree=DEFAULT_MAX_DEGREE):
        self.a = a
        self.c = c
        self.mu_min = mu_min
        self.mu_max = mu_max
        self.mu_step = mu_step
        self.refine_tol = refine_tol
        self.r_max = r_max
        self.x_max = x_max
        self.weight_exponent = weight_exponent
        self.require_transition = require_transition
        self.epsilon_order = epsilon_order
        self.max_degree = max_degree

    def fit(self, X=None, y=None):
        spec = PotentialSpec(float(self.c), float(self.a))
        scan = ScanConfig(mu_min=self.mu_min, mu_max=self.mu_max, mu_step=self.mu_step,
                          refine_tol=self.refine_tol, r_max=self.r_max,
                          weight_exponent=self.weight_exponent,
                          require_transition=self.require_transition)
        exp = expand(spec, self.epsilon_order, self.max_degree)
        res = scan_concentration(exp, spec, scan, SolverConfig(x_max=self.x_max))
        self.points_ = res.points
        self.rejected_ = res.rejected
        self.maxima_ = res.maxima
        return self

    def predict(self, X=None):
        """mu0 of each concentration point."""
        check_is_fitted(self, "points_")
        return np.array([p.mu0 for p in self.points_])
