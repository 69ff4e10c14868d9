"""Seeded K-means on inputs for SEM initialization.

Hand-rolled Lloyd iterations with k-means++ seeding and a fixed number of
restarts, so that (data, K, seed) determines the labels bit-for-bit.  A
minimum cluster size is enforced at the end because the assignment sampler
needs every cluster to support a leave-one-out predictive density.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import KTooLarge

__all__ = ["KMeansResult", "kmeans", "min_cluster_size"]

_RESTARTS = 4
_MAX_LLOYD = 100


@dataclass(frozen=True)
class KMeansResult:
    centers: np.ndarray
    labels: np.ndarray
    inertia: float


def min_cluster_size(n: int, d: int, k: int) -> int:
    """Smallest cluster size enforced across the pipeline.

    max(2, d+1) points per cluster, capped at n // K so any K <= n stays
    feasible (K = n degenerates to singletons).
    """
    return max(1, min(max(2, d + 1), n // k))


def _sq_dist_to(x, centers):
    return ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)


def _plusplus_seed(x, k, rng):
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    closest = ((x - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            centers[j] = x[rng.integers(n)]
            continue
        centers[j] = x[rng.choice(n, p=closest / total)]
        closest = np.minimum(closest, ((x - centers[j]) ** 2).sum(axis=1))
    return centers


def _lloyd(x, centers, rng):
    """Lloyd iterations; returns (centers, labels, inertia, inertia history)."""
    n, k = x.shape[0], centers.shape[0]
    labels = np.full(n, -1)
    history = []
    for _ in range(_MAX_LLOYD):
        d2 = _sq_dist_to(x, centers)
        new_labels = d2.argmin(axis=1)
        for empty in np.flatnonzero(np.bincount(new_labels, minlength=k) == 0):
            # Re-seed an empty cluster at the point farthest from its center.
            far = d2[np.arange(n), new_labels].argmax()
            new_labels[far] = empty
            centers[empty] = x[far]
            d2[:, empty] = ((x - centers[empty]) ** 2).sum(axis=1)
        history.append(float(d2[np.arange(n), new_labels].sum()))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(k):
            members = labels == j
            if members.any():
                centers[j] = x[members].mean(axis=0)
    d2 = _sq_dist_to(x, centers)
    inertia = float(d2[np.arange(n), labels].sum())
    return centers, labels, inertia, history


def _enforce_min_size(x, centers, labels, size_floor):
    k = centers.shape[0]
    sizes = np.bincount(labels, minlength=k)
    while sizes.min() < size_floor:
        small = int(sizes.argmin())
        donors = np.flatnonzero(labels != small)
        donors = donors[sizes[labels[donors]] > size_floor]
        if donors.size == 0:
            break
        biggest = sizes[labels[donors]].max()
        donors = donors[sizes[labels[donors]] == biggest]
        d2 = ((x[donors] - centers[small]) ** 2).sum(axis=1)
        move = donors[d2.argmin()]
        sizes[labels[move]] -= 1
        sizes[small] += 1
        labels[move] = small
    for j in range(k):
        members = labels == j
        if members.any():
            centers[j] = x[members].mean(axis=0)
    return centers, labels


def kmeans(x: np.ndarray, k: int, seed: int) -> KMeansResult:
    """K-means with k-means++ seeding, 4 restarts, best inertia kept.

    Labels are 0-based.  Raises KTooLarge when k exceeds the number of
    points.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n, d = x.shape
    if k < 1:
        raise ValueError("k must be at least 1")
    if k > n:
        raise KTooLarge(f"k={k} exceeds n={n}")
    if k == 1:
        center = x.mean(axis=0, keepdims=True)
        inertia = float(((x - center) ** 2).sum())
        return KMeansResult(centers=center, labels=np.zeros(n, dtype=int),
                            inertia=inertia)
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(_RESTARTS):
        centers = _plusplus_seed(x, k, rng)
        centers, labels, inertia, _ = _lloyd(x, centers, rng)
        if best is None or inertia < best[2]:
            best = (centers, labels, inertia)
    centers, labels, _ = best
    centers, labels = _enforce_min_size(x, centers, labels.copy(),
                                        min_cluster_size(n, d, k))
    d2 = _sq_dist_to(x, centers)
    inertia = float(d2[np.arange(n), labels].sum())
    return KMeansResult(centers=centers, labels=labels, inertia=inertia)
