"""Stochastic EM for the clustered GP.

The E-step sweeps the points in order, drawing each z_i from its full
conditional: per-cluster predictive density of y_i (leave-one-out for the
point's current cluster) times the gating probability.  Cluster covariance
inverses are maintained by rank-one updates, with a periodic full
refactorization to cap floating-point drift.  The M-step refits per-cluster
GPs (concurrently) and the gating model.  The returned model is frozen at
the iteration with the smallest LOOCV RMSE.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .cluster_init import kmeans, min_cluster_size
from .exceptions import DegenerateCluster, DuplicatedPoints, InfeasibleK, TooFewPoints
from .gating import GatingModel, fit_gating, gating_log_probs, gating_probs
from .gp import FittedGp, GpParams, fit_gp, gp_predict_batch, loocv_means
from .linalg import (
    CorrelationSpec,
    augment_inverse,
    corr_cross,
    corr_matrix,
    diminish_inverse,
    factorize,
)

__all__ = [
    "SemConfig",
    "ClusterState",
    "SemTrace",
    "ClusteredGpModel",
    "assignment_probs",
    "stochastic_e_step",
    "m_step",
    "loocv_rmse",
    "fit_clustered_gp",
    "select_k",
]

_LOG2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class SemConfig:
    """Tuning knobs of the SEM driver.

    ridge is the per-point gating penalty; the fit uses ridge * n.  The
    hyperparameter search runs ``n_starts`` local searches on cold fits and
    ``warm_starts`` when a previous gamma seeds the search.  ``refit_every``
    throttles hyperparameter refits; the gating and the closed-form mean and
    variance are still refreshed every iteration.  ``n_max`` caps cluster
    sizes by redirecting draws into full clusters back to the current one.
    """

    max_iter: int = 100
    patience: int = 10
    seed: int = 0
    nugget: float = 1e-6
    power: float = 2.0
    ridge: float = 1e-4
    gamma_bounds: np.ndarray | None = None
    n_starts: int = 8
    warm_starts: int = 2
    refit_every: int = 1
    shuffle_sweep: bool = False
    n_max: int | None = None
    refactor_interval: int = 64
    threads: int = 1
    maxfev: int | None = None


class _ClusterCache:
    """Mutable per-cluster bundle kept consistent by the E-step.

    ``idx`` lists the point indices in factorization order; ``weights`` is
    Q (Y_k - mu 1) in that order.
    """

    __slots__ = ("idx", "params", "fact", "weights", "updates")

    def __init__(self, idx, params, fact, weights):
        self.idx = idx
        self.params = params
        self.fact = fact
        self.weights = weights
        self.updates = 0

    def spec(self):
        return self.params.corr

    def refresh_weights(self, y):
        self.weights = self.fact.inverse @ (y[self.idx] - self.params.mu)


class ClusterState:
    """Full mutable SEM state: data, labels, caches, gating."""

    def __init__(self, x, y, z, clusters, gating, config):
        self.x = x
        self.y = y
        self.z = z
        self.clusters = clusters
        self.gating = gating
        self.config = config
        self.min_size = min_cluster_size(x.shape[0], x.shape[1], len(clusters))
        self.last_switches = 0
        self.last_redirected = 0
        self.merges = 0

    @property
    def n_clusters(self):
        return len(self.clusters)


@dataclass
class SemTrace:
    """Per-iteration LOOCV RMSE, switch counts and assignment snapshots."""

    rmse: list = field(default_factory=list)
    switches: list = field(default_factory=list)
    assignments: list = field(default_factory=list)
    best_index: int = 0

    def record(self, rmse, switches, z):
        self.rmse.append(float(rmse))
        self.switches.append(int(switches))
        self.assignments.append(z.astype(np.min_scalar_type(len(z))))
        if rmse < self.rmse[self.best_index]:
            self.best_index = len(self.rmse) - 1


@dataclass(frozen=True)
class ClusteredGpModel:
    """Fitted clustered GP, frozen at the best-LOOCV iteration."""

    n_clusters: int
    assignments: np.ndarray
    gps: tuple
    gating: GatingModel
    x: np.ndarray
    y: np.ndarray


def _cluster_log_density(state: ClusterState, i: int, k: int) -> float:
    """Log predictive density of y_i under cluster k without the point."""
    cache = state.clusters[k]
    p = cache.params
    if i in cache.idx:
        # Exact leave-one-out through the partitioned inverse: with the
        # point's row removed, mu* = y_i - B_i / q_ii and sigma*^2 =
        # sigma2 / q_ii.
        pos = cache.idx.index(i)
        q_ii = cache.fact.inverse[pos, pos]
        mu_star = state.y[i] - cache.weights[pos] / q_ii
        var_star = p.sigma2 / q_ii
    else:
        r = corr_cross(state.x[i : i + 1], state.x[cache.idx], p.corr)[0]
        mu_star = p.mu + r @ cache.weights
        quad = r @ (cache.fact.inverse @ r)
        var_star = p.sigma2 * (1.0 + p.corr.nugget - quad)
    floor = p.sigma2 * p.corr.nugget if p.corr.nugget > 0 else p.sigma2 * 1e-12
    var_star = max(var_star, floor, 1e-300)
    resid = state.y[i] - mu_star
    return -0.5 * (_LOG2PI + np.log(var_star)) - 0.5 * resid * resid / var_star


def assignment_probs(state: ClusterState, i: int) -> np.ndarray:
    """Full-conditional probabilities of z_i over the K clusters.

    Per cluster: predictive normal density of y_i given the cluster's other
    points (its own cluster contributes a leave-one-out density) times the
    gating probability, normalized in log space.
    """
    k = state.n_clusters
    log_g = gating_log_probs(state.gating, state.x[i : i + 1])[0]
    log_p = np.array(
        [_cluster_log_density(state, i, j) for j in range(k)]
    ) + log_g
    return np.exp(log_p - logsumexp(log_p))


def _move_point(state: ClusterState, i: int, old: int, new: int):
    y = state.y
    src = state.clusters[old]
    pos = src.idx.index(i)
    src.fact = diminish_inverse(src.fact, pos)
    src.idx.pop(pos)
    src.updates += 1
    _maybe_refactor(state, src)
    src.refresh_weights(y)

    dst = state.clusters[new]
    r = corr_cross(state.x[dst.idx], state.x[i : i + 1], dst.spec())[:, 0]
    dst.fact = augment_inverse(dst.fact, r, 1.0 + dst.spec().nugget)
    dst.idx.append(i)
    dst.updates += 1
    _maybe_refactor(state, dst)
    dst.refresh_weights(y)
    state.z[i] = new


def _maybe_refactor(state: ClusterState, cache: _ClusterCache):
    if cache.updates >= state.config.refactor_interval:
        cache.fact = factorize(corr_matrix(state.x[cache.idx], cache.spec()))
        cache.updates = 0


def stochastic_e_step(state: ClusterState, rng: np.random.Generator) -> ClusterState:
    """One Gibbs sweep over all points in index order.

    Points whose cluster is at the minimum size are pinned (no draw), as are
    draws into clusters already at the optional ``n_max`` cap; both count as
    redirected.
    """
    n = state.x.shape[0]
    switches = redirected = 0
    order = rng.permutation(n) if state.config.shuffle_sweep else range(n)
    for i in order:
        old = int(state.z[i])
        if len(state.clusters[old].idx) <= state.min_size:
            redirected += 1
            continue
        probs = assignment_probs(state, i)
        new = int(rng.choice(state.n_clusters, p=probs))
        if new != old:
            cap = state.config.n_max
            if cap is not None and len(state.clusters[new].idx) >= cap:
                redirected += 1
                continue
            _move_point(state, i, old, new)
            switches += 1
    state.last_switches = switches
    state.last_redirected = redirected
    return state


def _fit_cluster(x, y, idx, init, config, cold):
    n_starts = config.n_starts if cold else config.warm_starts
    try:
        fitted = fit_gp(
            x[idx],
            y[idx],
            init=init,
            bounds=config.gamma_bounds,
            power=config.power,
            nugget=config.nugget,
            n_starts=n_starts,
            maxfev=config.maxfev,
        )
    except TooFewPoints as exc:
        # Small clusters were already merged away; a failure here means the
        # cluster is numerically unusable, not merely small.
        raise DegenerateCluster(str(exc)) from exc
    return fitted


def m_step(state: ClusterState, cold: bool = False, refit_gamma: bool = True) -> ClusterState:
    """Refit per-cluster GPs (concurrently) and the gating model."""
    x, y, config = state.x, state.y, state.config
    _repair_small_clusters(state)
    jobs = []
    for cache in state.clusters:
        init = None if cold else cache.params.corr
        jobs.append((cache.idx, init))
    if refit_gamma:
        if config.threads > 1 and len(jobs) > 1:
            with ThreadPoolExecutor(max_workers=config.threads) as pool:
                futures = [
                    pool.submit(_fit_cluster, x, y, idx, init, config, cold)
                    for idx, init in jobs
                ]
                fits = [f.result() for f in futures]
        else:
            fits = [_fit_cluster(x, y, idx, init, config, cold) for idx, init in jobs]
        for cache, fitted in zip(state.clusters, fits):
            cache.params = fitted.params
            cache.fact = fitted.fact
            cache.weights = fitted.weights
            cache.updates = 0
    else:
        # Keep gamma; refresh the closed-form mean and variance only.
        for cache in state.clusters:
            q = cache.fact.inverse
            yk = y[cache.idx]
            ones = np.ones(len(cache.idx))
            mu = float(ones @ q @ yk) / float(ones @ q @ ones)
            resid = yk - mu
            sigma2 = max(float(resid @ q @ resid) / len(cache.idx), 1e-300)
            cache.params = GpParams(mu=mu, sigma2=sigma2, corr=cache.params.corr)
            cache.weights = q @ resid
    if state.n_clusters > 1:
        state.gating = fit_gating(
            x,
            state.z,
            n_classes=state.n_clusters,
            ridge=config.ridge * x.shape[0],
            init=state.gating,
        )
    return state


def _repair_small_clusters(state: ClusterState):
    """Merge clusters that fell below 2 points into their nearest neighbor."""
    while state.n_clusters > 1:
        sizes = [len(c.idx) for c in state.clusters]
        bad = [j for j, s in enumerate(sizes) if s < 2]
        if not bad:
            return
        j = bad[0]
        centroids = [state.x[c.idx].mean(axis=0) for c in state.clusters]
        dists = [
            np.inf if m == j else float(((centroids[m] - centroids[j]) ** 2).sum())
            for m in range(state.n_clusters)
        ]
        target = int(np.argmin(dists))
        absorbed = state.clusters.pop(j).idx
        keep = target if target < j else target - 1
        dst = state.clusters[keep]
        dst.idx = dst.idx + absorbed
        spec = dst.spec()
        dst.fact = factorize(corr_matrix(state.x[dst.idx], spec))
        dst.updates = 0
        dst.refresh_weights(state.y)
        # Renumber labels to 0..K-1.
        remap = {}
        for new_k, cache in enumerate(state.clusters):
            for i in cache.idx:
                remap[i] = new_k
        state.z = np.array([remap[i] for i in range(state.x.shape[0])])
        state.min_size = min_cluster_size(
            state.x.shape[0], state.x.shape[1], state.n_clusters
        )
        state.gating = GatingModel(
            n_classes=state.n_clusters,
            intercepts=np.zeros(state.n_clusters - 1),
            slopes=np.zeros((state.n_clusters - 1, state.x.shape[1])),
        )
        state.merges += 1
        if state.n_clusters == 1:
            return


def loocv_rmse(state: ClusterState) -> float:
    """Mixture LOOCV RMSE over all points.

    Cluster members contribute the leave-one-out shortcut mean; other
    clusters contribute their ordinary predictive mean; both are combined
    with the gating weights.
    """
    x, y = state.x, state.y
    n = x.shape[0]
    k = state.n_clusters
    preds = np.empty((n, k))
    for j, cache in enumerate(state.clusters):
        p = cache.params
        members = np.asarray(cache.idx)
        q_diag = np.diag(cache.fact.inverse)
        preds[members, j] = y[members] - cache.weights / q_diag
        others = np.setdiff1d(np.arange(n), members, assume_unique=True)
        if others.size:
            r = corr_cross(x[others], x[members], p.corr)
            preds[others, j] = p.mu + r @ cache.weights
    if k == 1:
        mixed = preds[:, 0]
    else:
        g = gating_probs(state.gating, x)
        mixed = np.einsum("ij,ij->i", preds, g)
    return float(np.sqrt(np.mean((y - mixed) ** 2)))


def _build_state(x, y, z, k, config) -> ClusterState:
    clusters = []
    for j in range(k):
        idx = np.flatnonzero(z == j).tolist()
        spec = CorrelationSpec(
            gamma=np.full(x.shape[1], 1.0), power=config.power, nugget=config.nugget
        )
        params = GpParams(mu=0.0, sigma2=1.0, corr=spec)
        # fact and weights are placeholders until the first (cold) M-step.
        clusters.append(_ClusterCache(idx, params, None, np.zeros(len(idx))))
    gating = GatingModel(
        n_classes=k,
        intercepts=np.zeros(k - 1),
        slopes=np.zeros((k - 1, x.shape[1])),
    )
    return ClusterState(x, y, z.astype(int).copy(), clusters, gating, config)


def _freeze_model(state: ClusterState, trace: SemTrace, snapshots) -> ClusteredGpModel:
    z, params_list, gating = snapshots[trace.best_index]
    x, y = state.x, state.y
    gps = []
    for j, params in enumerate(params_list):
        idx = np.flatnonzero(z == j)
        fact = factorize(corr_matrix(x[idx], params.corr))
        weights = fact.inverse @ (y[idx] - params.mu)
        gps.append(
            FittedGp(params=params, x=x[idx], y=y[idx], fact=fact, weights=weights)
        )
    return ClusteredGpModel(
        n_clusters=len(gps),
        assignments=np.asarray(z, dtype=int).copy(),
        gps=tuple(gps),
        gating=gating,
        x=x,
        y=y,
    )


def fit_clustered_gp(
    x: np.ndarray, y: np.ndarray, k: int, config: SemConfig | None = None
) -> tuple[ClusteredGpModel, SemTrace]:
    """Fit a K-cluster GP mixture by stochastic EM.

    K-means initialization, an initial M-step, then alternating Gibbs
    E-steps and M-steps; stops when the LOOCV RMSE has not improved for
    ``config.patience`` iterations or at ``config.max_iter``.  Returns the
    model frozen at the best-LOOCV iteration together with the trace.
    """
    config = config or SemConfig()
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    n, d = x.shape
    if y.shape[0] != n:
        raise ValueError("x and y lengths differ")
    if k < 1:
        raise InfeasibleK("k must be at least 1")
    if n < 2 * k:
        raise InfeasibleK(f"need n >= 2k, got n={n}, k={k}")
    if np.unique(x, axis=0).shape[0] != n:
        raise DuplicatedPoints("duplicated input points; deduplicate the data first")
    if config.gamma_bounds is None:
        from .gp import default_gamma_bounds

        config = _with_bounds(config, default_gamma_bounds(x))

    z0 = kmeans(x, k, seed=config.seed).labels
    state = _build_state(x, y, z0, k, config)
    m_step(state, cold=True)
    trace = SemTrace()
    trace.record(loocv_rmse(state), 0, state.z)
    snapshots = [_snapshot(state)]

    if k == 1:
        return _freeze_model(state, trace, snapshots), trace

    rng = np.random.default_rng(config.seed)
    for t in range(1, config.max_iter + 1):
        stochastic_e_step(state, rng)
        refit = config.refit_every > 0 and t % config.refit_every == 0
        m_step(state, refit_gamma=refit)
        trace.record(loocv_rmse(state), state.last_switches, state.z)
        snapshots.append(_snapshot(state))
        if t - trace.best_index >= config.patience:
            break
        if state.n_clusters == 1:
            break
    return _freeze_model(state, trace, snapshots), trace


def _snapshot(state: ClusterState):
    return (
        state.z.copy(),
        [c.params for c in state.clusters],
        state.gating,
    )


def _with_bounds(config: SemConfig, bounds) -> SemConfig:
    from dataclasses import replace

    return replace(config, gamma_bounds=bounds)


def select_k(
    x: np.ndarray, y: np.ndarray, k_grid, config: SemConfig | None = None
) -> tuple[int, dict]:
    """Fit each K on the grid, return the K with the lowest best LOOCV RMSE.

    Ties go to the smaller K.
    """
    scores = {}
    for k in k_grid:
        _, trace = fit_clustered_gp(x, y, k, config)
        scores[int(k)] = float(min(trace.rmse))
    best = min(sorted(scores), key=lambda k: scores[k])
    return best, scores
