"""Single stationary GP with constant mean.

Fitting maximizes the profile log-likelihood over log decay rates: for fixed
gamma the mean and variance have closed forms

    mu_hat     = (1' Q Y) / (1' Q 1)
    sigma2_hat = (Y - mu_hat 1)' Q (Y - mu_hat 1) / n

with Q the inverse of the (nugget-augmented) correlation matrix, leaving
-(1/2) [n log sigma2_hat + logdet Phi_gamma] to be searched numerically.
The search is multistart bounded Nelder-Mead over log gamma.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, solve_triangular
from scipy.optimize import minimize

from .exceptions import TooFewPoints
from .linalg import CorrelationSpec, SpdFactorization, corr_cross, corr_matrix, factorize

__all__ = [
    "GpParams",
    "FittedGp",
    "fit_gp",
    "gp_predict",
    "gp_predict_batch",
    "loocv_means",
    "default_gamma_bounds",
]

# Fixed seed for the multistart points so identical fitting problems explore
# identical starts, independent of any caller RNG state.
_START_SEED = 202301
_N_STARTS = 8


@dataclass(frozen=True)
class GpParams:
    """Constant mean, process variance and correlation spec of one GP."""

    mu: float
    sigma2: float
    corr: CorrelationSpec

    def __post_init__(self):
        if not self.sigma2 > 0.0:
            raise ValueError("sigma2 must be strictly positive")


@dataclass(frozen=True)
class FittedGp:
    """Fitted GP bundled with its data and cached solve products.

    ``weights`` is Q (Y - mu 1); together with the cached inverse it makes
    prediction, leave-one-out means and assignment densities O(n) to O(n^2).
    """

    params: GpParams
    x: np.ndarray
    y: np.ndarray
    fact: SpdFactorization
    weights: np.ndarray
    converged: bool = field(default=True, compare=False)


def default_gamma_bounds(x: np.ndarray) -> np.ndarray:
    """Per-dimension (low, high) gamma bounds 10^-2/r_l .. 10^2/r_l.

    r_l is the observed range of input dimension l; degenerate (constant)
    dimensions fall back to a unit range.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    ranges = x.max(axis=0) - x.min(axis=0)
    ranges[ranges == 0.0] = 1.0
    return np.column_stack([1e-2 / ranges, 1e2 / ranges])


# Finite stand-in for +inf at infeasible gammas; keeps simplex arithmetic
# inside the optimizer free of inf - inf.
_INFEASIBLE = 1e300


def _profile_objective(log_gamma, x, y, power, nugget):
    """n log sigma2_hat + logdet, or a huge penalty off the SPD region."""
    spec = CorrelationSpec(gamma=np.exp(log_gamma), power=power, nugget=nugget)
    mat = corr_matrix(x, spec)
    try:
        lower, _ = cho_factor(mat, lower=True, check_finite=False)
    except LinAlgError:
        return _INFEASIBLE
    # Without a nugget, round-off under-estimates sigma2_hat near the
    # singular flat-correlation boundary while logdet stays accurate, so a
    # spurious minimum appears there (the exact-arithmetic likelihood repels
    # that boundary).  Capping the condition number at 1e8 keeps ~8 digits
    # in the solves and removes the artifact.  Eigenvalue interlacing gives
    # Cholesky pivots >= sqrt(nugget), so any positive nugget bounds the
    # conditioning itself and skips the spectrum entirely.
    if nugget == 0.0:
        lam = np.linalg.eigvalsh(mat)
        if lam[0] <= 1e-8 * lam[-1]:
            return _INFEASIBLE
    n = y.shape[0]
    u = solve_triangular(lower, y, lower=True, check_finite=False)
    v = solve_triangular(lower, np.ones(n), lower=True, check_finite=False)
    mu = float(v @ u) / float(v @ v)
    resid = u - mu * v
    sigma2 = float(resid @ resid) / n
    sigma2 = max(sigma2, 1e-300)
    logdet = 2.0 * float(np.sum(np.log(np.diag(lower))))
    return n * np.log(sigma2) + logdet


def _search_one(start, x, y, power, nugget, log_lo, log_hi, options):
    """One local search; returns (best f, best clipped log gamma, success)."""
    seen = {"f": np.inf, "lg": None}

    def recorded(lg):
        fval = _profile_objective(lg, x, y, power, nugget)
        if fval < seen["f"]:
            seen["f"], seen["lg"] = fval, np.clip(lg, log_lo, log_hi)
        return fval

    success = False
    try:
        res = minimize(
            recorded,
            start,
            method="Nelder-Mead",
            bounds=list(zip(log_lo, log_hi)),
            options=options,
        )
        success = bool(res.success)
    except Exception:
        pass
    return seen["f"], seen["lg"], success


def fit_gp(
    x: np.ndarray,
    y: np.ndarray,
    init: CorrelationSpec | None = None,
    bounds: np.ndarray | None = None,
    power: float = 2.0,
    nugget: float = 1e-6,
    n_starts: int = _N_STARTS,
    maxfev: int | None = None,
    threads: int = 1,
) -> FittedGp:
    """Fit a constant-mean GP by profile maximum likelihood.

    Parameters
    ----------
    x, y : arrays of shape (n, d) and (n,)
        Training inputs and responses, n >= 2.
    init : CorrelationSpec, optional
        Warm start.  Its gamma is kept exactly when no search point improves
        the profile likelihood beyond round-off, so refitting an unchanged
        cluster is idempotent.
    bounds : array of shape (d, 2), optional
        Per-dimension gamma bounds; defaults to 10^-2/r_l .. 10^2/r_l.
    n_starts : int
        Number of local searches; starts are the box center plus seeded
        uniform draws, identical for identical boxes.
    maxfev : int, optional
        Cap on objective evaluations per local search.
    threads : int
        Local searches to run concurrently.  Results are merged in start
        order, so the fit is identical for any thread count.

    Returns
    -------
    FittedGp
        ``converged`` is False when every local search failed and the
        returned parameters are just the best point evaluated.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    n, d = x.shape
    if n < 2:
        raise TooFewPoints(f"need at least 2 points to fit a GP, got {n}")
    if y.shape[0] != n:
        raise ValueError("x and y lengths differ")
    if bounds is None:
        bounds = default_gamma_bounds(x)
    bounds = np.asarray(bounds, dtype=float)
    log_lo, log_hi = np.log(bounds[:, 0]), np.log(bounds[:, 1])

    starts = [0.5 * (log_lo + log_hi)]
    rng = np.random.default_rng(_START_SEED)
    for _ in range(max(n_starts - 1, 0)):
        starts.append(rng.uniform(log_lo, log_hi))
    starts = starts[:n_starts]

    f_init = None
    if init is not None:
        lg_init = np.clip(np.log(init.gamma), log_lo, log_hi)
        f_init = _profile_objective(lg_init, x, y, power, nugget)
        starts.insert(0, lg_init)

    # Each search tracks the best point it ever evaluated, so an optimizer
    # failure still leaves a usable answer.
    options = {} if maxfev is None else {"maxfev": maxfev}
    args = (x, y, power, nugget, log_lo, log_hi, options)
    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda s: _search_one(s, *args), starts))
    else:
        results = [_search_one(s, *args) for s in starts]

    best_f, best_lg, converged = np.inf, None, False
    for fval, lg, success in results:
        converged = converged or success
        if lg is not None and fval < best_f:
            best_f, best_lg = fval, lg
    if best_lg is None or not np.isfinite(best_f):
        raise TooFewPoints("no feasible correlation matrix in the gamma box")
    if not converged:
        warnings.warn("GP hyperparameter search failed; keeping best evaluated point")

    if f_init is not None and best_f >= f_init - 1e-10 * (1.0 + abs(f_init)):
        # No real improvement over the warm start: keep it bit-for-bit.
        spec = CorrelationSpec(gamma=init.gamma, power=power, nugget=nugget)
    else:
        spec = CorrelationSpec(gamma=np.exp(best_lg), power=power, nugget=nugget)
    return _finalize(x, y, spec, converged)


def _finalize(x, y, spec, converged=True):
    fact = factorize(corr_matrix(x, spec))
    q = fact.inverse
    ones = np.ones(y.shape[0])
    mu = float(ones @ q @ y) / float(ones @ q @ ones)
    resid = y - mu
    sigma2 = float(resid @ q @ resid) / y.shape[0]
    sigma2 = max(sigma2, 1e-300)
    params = GpParams(mu=mu, sigma2=sigma2, corr=spec)
    return FittedGp(
        params=params, x=x, y=y, fact=fact, weights=q @ resid, converged=converged
    )


def gp_predict(model: FittedGp, xnew: np.ndarray) -> tuple[float, float]:
    """Predictive mean and variance at one point.

    mu_star = mu + r' Q (Y - mu 1); sigma_star2 = sigma2 (1 + nugget - r' Q r),
    clamped at 0 from below.  The nugget appears in the held-out
    self-correlation so that prediction and assignment densities use one
    covariance convention.
    """
    mean, var = gp_predict_batch(model, np.atleast_2d(np.asarray(xnew, dtype=float)))
    return float(mean[0]), float(var[0])


def gp_predict_batch(model: FittedGp, xnew: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized predictive means and variances at many points."""
    p = model.params
    xnew = np.atleast_2d(np.asarray(xnew, dtype=float))
    r = corr_cross(xnew, model.x, p.corr)
    mean = p.mu + r @ model.weights
    quad = np.einsum("ij,ij->i", r @ model.fact.inverse, r)
    var = p.sigma2 * np.maximum(1.0 + p.corr.nugget - quad, 0.0)
    return mean, var


def loocv_means(model: FittedGp) -> np.ndarray:
    """Leave-one-out predictive means at the training points.

    mu_hat^(-i) = mu_hat - (1/q_ii) sum_{j != i} q_ij (y_j - mu_hat), which
    collapses to y_i - B_i / q_ii with B = Q (Y - mu_hat 1).  Hyperparameters
    and mu_hat stay fixed at their full-data values.
    """
    if model.fact.order < 2:
        raise TooFewPoints("leave-one-out needs at least 2 points")
    q_diag = np.diag(model.fact.inverse)
    return model.y - model.weights / q_diag
