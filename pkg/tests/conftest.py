"""Shared reference implementations used as oracles across the test suite.

Everything here is written the slow, obvious way on purpose: scalar loops,
Gauss-Jordan elimination, full joint densities.  The production code must
agree with these within stated tolerances.
"""

import numpy as np


def naive_corr(points, gamma, power=2.0, nugget=0.0):
    """Entry-by-entry power-exponential correlation matrix."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != len(np.atleast_1d(gamma)):
        pts = pts.T
    gamma = np.atleast_1d(np.asarray(gamma, dtype=float))
    n = pts.shape[0]
    out = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            acc = 0.0
            for l in range(pts.shape[1]):
                acc += (gamma[l] * (pts[i, l] - pts[j, l])) ** 2
            out[i, j] = np.exp(-(acc ** (power / 2.0)))
    for i in range(n):
        out[i, i] += nugget
    return out


def naive_cross(a, b, gamma, power=2.0):
    """Entry-by-entry rectangular correlation block."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    gamma = np.atleast_1d(np.asarray(gamma, dtype=float))
    out = np.empty((a.shape[0], b.shape[0]))
    for i in range(a.shape[0]):
        for j in range(b.shape[0]):
            acc = 0.0
            for l in range(a.shape[1]):
                acc += (gamma[l] * (a[i, l] - b[j, l])) ** 2
            out[i, j] = np.exp(-(acc ** (power / 2.0)))
    return out


def gauss_jordan_inverse(mat):
    """Matrix inverse by Gauss-Jordan elimination with partial pivoting."""
    a = np.array(mat, dtype=float)
    n = a.shape[0]
    aug = np.hstack([a, np.eye(n)])
    for col in range(n):
        pivot = col + int(np.argmax(np.abs(aug[col:, col])))
        if np.abs(aug[pivot, col]) < 1e-300:
            raise np.linalg.LinAlgError("singular matrix")
        if pivot != col:
            aug[[col, pivot]] = aug[[pivot, col]]
        aug[col] = aug[col] / aug[col, col]
        for row in range(n):
            if row != col:
                aug[row] -= aug[row, col] * aug[col]
    return aug[:, n:]


def conditioned_pool(rng, n, d, nugget=1e-6, min_eig=1e-3):
    """Point pool and gamma whose correlation matrix is well conditioned.

    Points come from a jittered latin hypercube (bounded separation), and
    gamma is scaled up until the smallest eigenvalue of the full-pool
    correlation matrix clears ``min_eig``.  By eigenvalue interlacing every
    subset of the pool is then at least as well conditioned, which keeps
    absolute 1e-7 comparisons against fresh factorizations meaningful.
    """
    pts = np.empty((n, d))
    for l in range(d):
        strata = (np.arange(n) + rng.random(n)) / n
        pts[:, l] = rng.permutation(strata)
    gamma = (1.0 + 3.0 * rng.random(d)) * n ** (1.0 / d)
    while True:
        corr = naive_corr_fast(pts, gamma, nugget=nugget)
        if np.linalg.eigvalsh(corr)[0] >= min_eig:
            return pts, gamma
        gamma = gamma * 1.5


def naive_corr_fast(points, gamma, power=2.0, nugget=0.0):
    """Vectorized power-exponential correlation (generator helper, not an oracle)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float)) * np.asarray(gamma)
    sq = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
    out = np.exp(-(sq ** (power / 2.0)))
    out[np.diag_indices_from(out)] = 1.0 + nugget
    return out


def brute_force_assignment_probs(x, y, z, i, params_list, gating):
    """Gibbs full conditional of z_i by direct joint-likelihood evaluation.

    For each candidate cluster k, sets z_i = k and evaluates the full
    complete-data log likelihood: one multivariate-normal density per
    nonempty cluster plus every point's log gating probability.  No
    conditional-distribution identities, no incremental updates.
    """
    from scipy.stats import multivariate_normal

    from clustergp.gating import gating_log_probs

    n_classes = len(params_list)
    log_gate = gating_log_probs(gating, x)
    logs = np.empty(n_classes)
    for k in range(n_classes):
        zz = np.asarray(z, dtype=int).copy()
        zz[i] = k
        total = 0.0
        for j, p in enumerate(params_list):
            members = np.flatnonzero(zz == j)
            if members.size == 0:
                continue
            cov = p.sigma2 * naive_corr(
                x[members], p.corr.gamma, power=p.corr.power, nugget=p.corr.nugget
            )
            dist = multivariate_normal(mean=np.full(members.size, p.mu), cov=cov)
            total += float(dist.logpdf(y[members]))
        total += float(log_gate[np.arange(zz.shape[0]), zz].sum())
        logs[k] = total
    shifted = np.exp(logs - logs.max())
    return shifted / shifted.sum()


def naive_conditional_gaussian(x_new, x_obs, y_obs, mu, sigma2, gamma,
                               power=2.0, nugget=0.0):
    """Conditional mean/variance of one new point under a joint Gaussian.

    Builds the full (n+1) covariance with the nugget on every diagonal
    entry (the new point included) and conditions by direct solves.
    """
    x_obs = np.atleast_2d(np.asarray(x_obs, dtype=float))
    x_new = np.asarray(x_new, dtype=float).reshape(1, -1)
    n = x_obs.shape[0]
    allx = np.vstack([x_obs, x_new])
    corr = naive_corr(allx, gamma, power=power, nugget=nugget)
    cov = sigma2 * corr
    k_oo = cov[:n, :n]
    k_on = cov[:n, n]
    k_nn = cov[n, n]
    sol = np.linalg.solve(k_oo, k_on)
    mean = mu + sol @ (np.asarray(y_obs, dtype=float) - mu)
    var = k_nn - k_on @ np.linalg.solve(k_oo, k_on)
    return float(mean), float(var)
