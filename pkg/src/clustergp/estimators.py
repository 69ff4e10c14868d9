"""Scikit-learn style estimators wrapping the core fitting routines.

Both estimators normalize inputs to [0,1]^d from the observed training
ranges (stored on the fitted object) so that gamma bounds and K-means are
scale-free; all user-facing values stay in original units.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from .gp import fit_gp, gp_predict_batch
from .predict import mixture_batch, mixture_quantile_batch
from .sem import SemConfig, fit_clustered_gp, select_k

__all__ = ["StationaryGP", "ClusteredGP"]


def _validate_xy(x, y=None):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("X must be a nonempty 2-D array")
    if not np.isfinite(x).all():
        raise ValueError("X contains non-finite values")
    if y is None:
        return x
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.shape[0] != x.shape[0]:
        raise ValueError("X and y lengths differ")
    if not np.isfinite(y).all():
        raise ValueError("y contains non-finite values")
    return x, y


class _NormalizingMixin:
    def _fit_ranges(self, x):
        self.x_min_ = x.min(axis=0)
        span = x.max(axis=0) - self.x_min_
        span[span == 0.0] = 1.0
        self.x_span_ = span

    def _normalize(self, x):
        if x.shape[1] != self.x_min_.shape[0]:
            raise ValueError(
                f"X has {x.shape[1]} features, the model was fit with "
                f"{self.x_min_.shape[0]}"
            )
        return (x - self.x_min_) / self.x_span_


class StationaryGP(RegressorMixin, _NormalizingMixin, BaseEstimator):
    """Single constant-mean GP fitted by profile maximum likelihood."""

    def __init__(self, nugget=1e-6, power=2.0, n_starts=8, maxfev=None,
                 threads=1):
        self.nugget = nugget
        self.power = power
        self.n_starts = n_starts
        self.maxfev = maxfev
        self.threads = threads

    def fit(self, X, y):
        x, y = _validate_xy(X, y)
        self._fit_ranges(x)
        self.gp_ = fit_gp(
            self._normalize(x),
            y,
            power=self.power,
            nugget=self.nugget,
            n_starts=self.n_starts,
            maxfev=self.maxfev,
            threads=self.threads,
        )
        return self

    def predict(self, X, return_var=False):
        x = _validate_xy(X)
        mean, var = gp_predict_batch(self.gp_, self._normalize(x))
        return (mean, var) if return_var else mean

    def predict_quantiles(self, X, levels=(0.025, 0.975)):
        """Predictive normal quantiles at each row, one column per level."""
        mean, var = self.predict(X, return_var=True)
        p = self.gp_.params
        floor = p.sigma2 * (p.corr.nugget if p.corr.nugget > 0 else 1e-12)
        sigma = np.sqrt(np.maximum(var, max(floor, 1e-300)))[:, None]
        cols = [
            mixture_quantile_batch(mean[:, None], sigma, np.ones_like(sigma), q)
            for q in levels
        ]
        return np.column_stack(cols)


class ClusteredGP(RegressorMixin, _NormalizingMixin, BaseEstimator):
    """K-cluster GP mixture fitted by stochastic EM.

    ``k`` may be an int or an iterable grid; a grid triggers LOOCV model
    selection and the chosen value lands in ``k_``.
    """

    def __init__(self, k=2, max_iter=100, patience=10, seed=0, nugget=1e-6,
                 power=2.0, ridge=1e-4, n_starts=8, warm_starts=2,
                 refit_every=1, shuffle_sweep=False, n_max=None, threads=1,
                 maxfev=None):
        self.k = k
        self.max_iter = max_iter
        self.patience = patience
        self.seed = seed
        self.nugget = nugget
        self.power = power
        self.ridge = ridge
        self.n_starts = n_starts
        self.warm_starts = warm_starts
        self.refit_every = refit_every
        self.shuffle_sweep = shuffle_sweep
        self.n_max = n_max
        self.threads = threads
        self.maxfev = maxfev

    def _config(self):
        return SemConfig(
            max_iter=self.max_iter,
            patience=self.patience,
            seed=self.seed,
            nugget=self.nugget,
            power=self.power,
            ridge=self.ridge,
            n_starts=self.n_starts,
            warm_starts=self.warm_starts,
            refit_every=self.refit_every,
            shuffle_sweep=self.shuffle_sweep,
            n_max=self.n_max,
            threads=self.threads,
            maxfev=self.maxfev,
        )

    def fit(self, X, y):
        x, y = _validate_xy(X, y)
        self._fit_ranges(x)
        xn = self._normalize(x)
        config = self._config()
        if np.iterable(self.k):
            grid = [int(v) for v in self.k]
            self.k_, self.k_scores_ = select_k(xn, y, grid, config)
        else:
            self.k_ = int(self.k)
            self.k_scores_ = None
        self.model_, self.trace_ = fit_clustered_gp(xn, y, self.k_, config)
        self.best_rmse_ = float(min(self.trace_.rmse))
        return self

    def predict(self, X, return_var=False):
        x = _validate_xy(X)
        means, sigmas, weights = mixture_batch(self.model_, self._normalize(x))
        mean = np.einsum("ij,ij->i", weights, means)
        if not return_var:
            return mean
        var = (
            np.einsum("ij,ij->i", weights, sigmas**2)
            + np.einsum("ij,ij->i", weights, means**2)
            - mean**2
        )
        return mean, np.maximum(var, 0.0)

    def predict_quantiles(self, X, levels=(0.025, 0.975)):
        """Mixture quantiles at each row; returns an (n, len(levels)) array."""
        x = _validate_xy(X)
        means, sigmas, weights = mixture_batch(self.model_, self._normalize(x))
        cols = [mixture_quantile_batch(means, sigmas, weights, q) for q in levels]
        return np.column_stack(cols)
