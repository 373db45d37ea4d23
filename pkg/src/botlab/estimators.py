"""scikit-learn style wrappers around the least-squares and likelihood estimators.

``X`` holds the unit observation times (one column), ``y`` the bearings.
"""
from __future__ import annotations

import warnings

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .estimate import BearingProblem, criterion_Mn, lse, mle
from .exceptions import ConfigurationError
from .geometry import ObserverPath, TrajectoryModel, uniform_linear_model
from .noise import ObservationNoiseSpec, TrajectoryNoiseSpec
from .optimize import OptimizerConfig
from .quadrature import gauss_hermite


class _BearingsEstimator(RegressorMixin, BaseEstimator):

    def _model(self) -> TrajectoryModel:
        return self.model if self.model is not None else uniform_linear_model(20.0)

    def _cfg(self) -> OptimizerConfig:
        return OptimizerConfig(max_fun_evals=self.max_fun_evals, max_iter=self.max_iter,
                               xatol=self.xatol, fatol=self.fatol, multistart=self.multistart)

    def _validate_fit(self, X, y):
        if not isinstance(self.observer, ObserverPath):
            raise ConfigurationError("observer must be an ObserverPath")
        X, y = check_X_y(X, y, y_numeric=True)
        if X.shape[1] != 1:
            raise ConfigurationError("X must have a single column of unit times")
        t = X[:, 0]
        if np.any((t < 0) | (t > 1)):
            raise ConfigurationError("observation times must lie in [0, 1]")
        self.n_features_in_ = 1
        return BearingProblem(t, y, self._model(), self.observer)

    def _store(self, res):
        self.result_ = res
        self.theta_ = res.theta
        self.converged_ = res.converged
        self.n_evals_ = res.nfev
        if not res.converged:
            # never hand back an answer silently; the flag says what happened
            warnings.warn(f"optimizer did not converge: {res.message}", RuntimeWarning)
        return self

    def predict(self, X) -> np.ndarray:
        """Noise-free bearings of the fitted trajectory at the times in ``X``."""
        check_is_fitted(self, "theta_")
        X = check_array(X)
        problem = BearingProblem(X[:, 0], np.zeros(X.shape[0]), self._model(), self.observer)
        return problem.predict(self.theta_)

    def score(self, X, y, sample_weight=None) -> float:
        """Negative mean squared wrapped bearing residual (higher is better)."""
        check_is_fitted(self, "theta_")
        X, y = check_X_y(X, y, y_numeric=True)
        problem = BearingProblem(X[:, 0], y, self._model(), self.observer)
        return -criterion_Mn(self.theta_, problem, self._model(), self.observer)


class BearingsLSE(_BearingsEstimator):
    """Least-squares trajectory estimate from bearings."""

    def __init__(self, observer=None, model=None, max_fun_evals=2000, max_iter=2000, xatol=1e-10, fatol=1e-12,
                 multistart=1, theta_init=None):
        self.observer = observer
        self.model = model
        self.max_fun_evals = max_fun_evals
        self.max_iter = max_iter
        self.xatol = xatol
        self.fatol = fatol
        self.multistart = multistart
        self.theta_init = theta_init

    def fit(self, X, y):
        problem = self._validate_fit(X, y)
        return self._store(lse(problem, self._model(), self.observer, self._cfg(), self.theta_init))


class BearingsMLE(_BearingsEstimator):
    """Marginal maximum-likelihood estimate with a known trajectory-noise law."""

    def __init__(self, observer=None, trajectory_noise=None, sigma=1e-3, model=None, quad_order=12,
                 max_fun_evals=2000, max_iter=2000, xatol=1e-10, fatol=1e-12, multistart=1, theta_init=None):
        self.observer = observer
        self.trajectory_noise = trajectory_noise
        self.sigma = sigma
        self.model = model
        self.quad_order = quad_order
        self.max_fun_evals = max_fun_evals
        self.max_iter = max_iter
        self.xatol = xatol
        self.fatol = fatol
        self.multistart = multistart
        self.theta_init = theta_init

    def fit(self, X, y):
        problem = self._validate_fit(X, y)
        if self.trajectory_noise is not None and not isinstance(self.trajectory_noise, TrajectoryNoiseSpec):
            raise ConfigurationError("trajectory_noise must be a TrajectoryNoiseSpec or None")
        res = mle(problem, self._model(), self.observer, self.trajectory_noise, ObservationNoiseSpec(self.sigma),
                  self._cfg(), gauss_hermite(self.quad_order), self.theta_init)
        return self._store(res)
