"""Latent-class gating: K-class multinomial logistic regression.

Class K is the reference with zero coefficients.  Fitting maximizes the
multinomial log-likelihood on hard assignments minus a ridge penalty on the
slopes; separable assignments are common right after K-means initialization
and would otherwise push coefficients to infinity.  Inputs are standardized
internally and the coefficients mapped back, so the returned model evaluates
on raw inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .exceptions import EmptyClass

__all__ = ["GatingModel", "gating_probs", "gating_log_probs", "fit_gating"]

_MAX_ITER = 500
_GRAD_TOL = 1e-6


@dataclass(frozen=True)
class GatingModel:
    """Softmax gating coefficients in original input coordinates.

    intercepts: (K-1,) and slopes: (K-1, d); class K (last) is the reference
    and has implicit zero coefficients.
    """

    n_classes: int
    intercepts: np.ndarray
    slopes: np.ndarray

    def __post_init__(self):
        intercepts = np.asarray(self.intercepts, dtype=float).reshape(-1)
        slopes = np.atleast_2d(np.asarray(self.slopes, dtype=float))
        if self.n_classes < 1:
            raise ValueError("need at least one class")
        if intercepts.shape[0] != self.n_classes - 1:
            raise ValueError("expected K-1 intercepts")
        if slopes.shape[0] != max(self.n_classes - 1, 1) and self.n_classes > 1:
            raise ValueError("expected K-1 slope rows")
        object.__setattr__(self, "intercepts", intercepts)
        object.__setattr__(self, "slopes", slopes)

    @property
    def dim(self) -> int:
        return self.slopes.shape[1]


def _scores(model: GatingModel, x: np.ndarray) -> np.ndarray:
    """n x K score matrix with the reference class fixed at 0."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if model.n_classes == 1:
        return np.zeros((x.shape[0], 1))
    s = x @ model.slopes.T + model.intercepts
    return np.hstack([s, np.zeros((x.shape[0], 1))])


def gating_log_probs(model: GatingModel, x: np.ndarray) -> np.ndarray:
    """Log class probabilities, one row per input point."""
    s = _scores(model, x)
    return s - logsumexp(s, axis=1, keepdims=True)


def gating_probs(model: GatingModel, x: np.ndarray) -> np.ndarray:
    """Class probabilities at one point (1-D input) or per row (2-D input)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    p = np.exp(gating_log_probs(model, x))
    return p[0] if single else p


def _penalized_ll(coef, x1, onehot, ridge):
    s = np.hstack([x1 @ coef.T, np.zeros((x1.shape[0], 1))])
    norm = logsumexp(s, axis=1)
    ll = float(np.sum(s[onehot] - norm))
    return ll - 0.5 * ridge * float(np.sum(coef[:, 1:] ** 2))


def _gradient(coef, x1, onehot, ridge):
    s = np.hstack([x1 @ coef.T, np.zeros((x1.shape[0], 1))])
    p = np.exp(s - logsumexp(s, axis=1, keepdims=True))
    resid = onehot[:, :-1].astype(float) - p[:, :-1]
    grad = resid.T @ x1
    grad[:, 1:] -= ridge * coef[:, 1:]
    return grad


def _ascend(coef, x1, onehot, ridge):
    """Gradient ascent with Armijo backtracking; returns (coef, ll history)."""
    ll = _penalized_ll(coef, x1, onehot, ridge)
    history = [ll]
    step = 1.0 / x1.shape[0]
    for _ in range(_MAX_ITER):
        grad = _gradient(coef, x1, onehot, ridge)
        gnorm2 = float(np.sum(grad * grad))
        if np.max(np.abs(grad)) <= _GRAD_TOL:
            break
        while True:
            trial = coef + step * grad
            ll_trial = _penalized_ll(trial, x1, onehot, ridge)
            if ll_trial >= ll + 1e-4 * step * gnorm2:
                break
            step *= 0.5
            if step < 1e-16:
                return coef, history
        coef, ll = trial, ll_trial
        history.append(ll)
        step *= 2.0
    return coef, history


def fit_gating(
    x: np.ndarray,
    z: np.ndarray,
    n_classes: int | None = None,
    ridge: float = 0.0,
    init: GatingModel | None = None,
) -> GatingModel:
    """Fit the gating model on hard assignments.

    Parameters
    ----------
    x : array of shape (n, d)
    z : int array of shape (n,)
        Labels in 0..K-1; every class must appear at least once.
    n_classes : int, optional
        K; defaults to max(z) + 1.
    ridge : float
        Penalty ridge * ||slopes||^2 / 2 subtracted from the log-likelihood,
        applied to slopes only, in standardized coordinates.
    init : GatingModel, optional
        Warm start; its coefficients are mapped into the current
        standardization before the ascent.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    z = np.asarray(z, dtype=int).reshape(-1)
    if z.shape[0] != x.shape[0]:
        raise ValueError("x and z lengths differ")
    if ridge < 0.0:
        raise ValueError("ridge must be nonnegative")
    k = int(n_classes) if n_classes is not None else int(z.max()) + 1
    counts = np.bincount(z, minlength=k)
    if z.min() < 0 or z.max() >= k:
        raise ValueError("labels out of range")
    missing = np.flatnonzero(counts == 0)
    if missing.size:
        raise EmptyClass(f"classes {missing.tolist()} have no assigned points")
    n, d = x.shape
    if k == 1:
        return GatingModel(n_classes=1, intercepts=np.zeros(0), slopes=np.zeros((0, d)))

    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    scale[scale == 0.0] = 1.0
    x1 = np.hstack([np.ones((n, 1)), (x - mean) / scale])
    onehot = np.zeros((n, k), dtype=bool)
    onehot[np.arange(n), z] = True

    coef = np.zeros((k - 1, d + 1))
    if init is not None and init.n_classes == k and init.dim == d:
        coef[:, 1:] = init.slopes * scale
        coef[:, 0] = init.intercepts + init.slopes @ mean
    coef, _ = _ascend(coef, x1, onehot, ridge)

    slopes = coef[:, 1:] / scale
    intercepts = coef[:, 0] - slopes @ mean
    return GatingModel(n_classes=k, intercepts=intercepts, slopes=slopes)
