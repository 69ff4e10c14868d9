"""Mixture predictive distribution at new inputs.

A prediction is a K-component normal mixture: per-cluster conditional
means/variances weighted by the gating probabilities.  Mean and variance
have closed forms; quantiles are found by bisection on the mixture CDF,
which is strictly increasing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .exceptions import QOutOfRange
from .gating import gating_probs
from .gp import gp_predict_batch

__all__ = [
    "PredictiveMixture",
    "predictive_mixture",
    "mixture_batch",
    "mixture_mean_var",
    "mixture_cdf",
    "mixture_quantile",
    "mixture_quantile_batch",
]

_CDF_TOL = 1e-10
_MAX_BISECT = 200


@dataclass(frozen=True)
class PredictiveMixture:
    """Per-cluster predictive normals and their gating weights at one point."""

    means: np.ndarray
    sigmas: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        means = np.asarray(self.means, dtype=float).reshape(-1)
        sigmas = np.asarray(self.sigmas, dtype=float).reshape(-1)
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if not means.shape == sigmas.shape == weights.shape:
            raise ValueError("component arrays must share a length")
        if not np.all(sigmas > 0.0):
            raise ValueError("sigmas must be strictly positive")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "sigmas", sigmas)
        object.__setattr__(self, "weights", weights)


def _floored_sigma(var, sigma2, nugget):
    floor = sigma2 * nugget if nugget > 0.0 else sigma2 * 1e-12
    return np.sqrt(np.maximum(var, max(floor, 1e-300)))


def predictive_mixture(model, xnew: np.ndarray) -> PredictiveMixture:
    """Mixture components at one new input of a fitted clustered model."""
    xnew = np.asarray(xnew, dtype=float).reshape(1, -1)
    means, sigmas, weights = mixture_batch(model, xnew)
    return PredictiveMixture(means=means[0], sigmas=sigmas[0], weights=weights[0])


def mixture_batch(model, xnew: np.ndarray):
    """Component means, sigmas and weights at many inputs.

    Returns three (m, K) arrays.  ``model`` is a fitted clustered GP
    exposing per-cluster ``gps`` and a ``gating`` model.
    """
    xnew = np.atleast_2d(np.asarray(xnew, dtype=float))
    m = xnew.shape[0]
    k = len(model.gps)
    means = np.empty((m, k))
    sigmas = np.empty((m, k))
    for j, gp in enumerate(model.gps):
        mu, var = gp_predict_batch(gp, xnew)
        means[:, j] = mu
        sigmas[:, j] = _floored_sigma(var, gp.params.sigma2, gp.params.corr.nugget)
    if k == 1:
        weights = np.ones((m, 1))
    else:
        weights = gating_probs(model.gating, xnew)
    return means, sigmas, weights


def mixture_mean_var(mix: PredictiveMixture) -> tuple[float, float]:
    """Mixture mean and variance.

    variance = sum w_k sigma_k^2 + sum w_k mu_k^2 - mean^2, clamped at 0
    from below (round-off can dip to -1e-12 when one component dominates).
    """
    w, mu, sig = mix.weights, mix.means, mix.sigmas
    mean = float(w @ mu)
    var = float(w @ (sig**2) + w @ (mu**2) - mean**2)
    return mean, max(var, 0.0)


def mixture_cdf(mix: PredictiveMixture, y: float) -> float:
    """P(y_new <= y) under the mixture."""
    return float(mix.weights @ ndtr((y - mix.means) / mix.sigmas))


def mixture_quantile(mix: PredictiveMixture, q: float) -> float:
    """The y with mixture CDF(y) = q, to |CDF - q| <= 1e-10, by bisection."""
    out = mixture_quantile_batch(
        mix.means[None, :], mix.sigmas[None, :], mix.weights[None, :], q
    )
    return float(out[0])


def mixture_quantile_batch(
    means: np.ndarray, sigmas: np.ndarray, weights: np.ndarray, q: float
) -> np.ndarray:
    """Vectorized mixture quantiles across points (rows of the inputs).

    Brackets each root in [min_k(mu_k - 10 sigma_k), max_k(mu_k + 10 sigma_k)]
    and bisects until every CDF value is within 1e-10 of q.  Rows whose
    bracket collapses to a single double (all sigmas negligible against the
    means) are numerical point masses; their quantile is the mass location
    for every q.

    Raises
    ------
    QOutOfRange
        If q is outside (0, 1) or beyond the 10-sigma bracket.
    """
    if not 0.0 < q < 1.0:
        raise QOutOfRange(f"quantile level {q} outside (0, 1)")
    lo = (means - 10.0 * sigmas).min(axis=1)
    hi = (means + 10.0 * sigmas).max(axis=1)
    point_mass = hi - lo == 0.0

    def cdf(y):
        return np.einsum(
            "ij,ij->i", weights, ndtr((y[:, None] - means) / sigmas)
        )

    bracketed = ~point_mass
    if np.any(cdf(lo)[bracketed] > q) or np.any(cdf(hi)[bracketed] < q):
        raise QOutOfRange(f"quantile level {q} beyond the 10-sigma bracket")
    mid = 0.5 * (lo + hi)
    for _ in range(_MAX_BISECT):
        val = cdf(mid)
        width_done = hi - lo <= 4.0 * np.finfo(float).eps * np.maximum(1.0, np.abs(mid))
        if np.all(((np.abs(val - q) <= _CDF_TOL) & width_done) | point_mass):
            break
        above = val > q
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
        mid = 0.5 * (lo + hi)
    return mid
