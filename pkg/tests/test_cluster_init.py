import numpy as np
import pytest

from clustergp.cluster_init import (
    KMeansResult,
    _lloyd,
    _plusplus_seed,
    kmeans,
    min_cluster_size,
)
from clustergp.exceptions import KTooLarge


def blobs(rng, centers, n_per, spread):
    pts, labels = [], []
    for j, c in enumerate(centers):
        pts.append(c + spread * rng.standard_normal((n_per, len(c))))
        labels.extend([j] * n_per)
    return np.vstack(pts), np.array(labels)


class TestKMeans:
    def test_single_cluster(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(20, 3))
        res = kmeans(x, 1, seed=0)
        assert np.array_equal(res.labels, np.zeros(20, dtype=int))
        assert np.allclose(res.centers[0], x.mean(axis=0))
        assert abs(res.inertia - ((x - x.mean(0)) ** 2).sum()) <= 1e-10

    def test_k_equals_n(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(6, 2))
        res = kmeans(x, 6, seed=0)
        assert res.inertia <= 1e-20
        assert len(set(res.labels.tolist())) == 6

    def test_k_too_large(self):
        with pytest.raises(KTooLarge):
            kmeans(np.zeros((3, 1)), 4, seed=0)

    def test_recovers_separated_blobs(self):
        rng = np.random.default_rng(3)
        x, truth = blobs(rng, [np.array([0.0, 0.0]), np.array([10.0, 10.0])],
                         n_per=25, spread=0.5)
        res = kmeans(x, 2, seed=7)
        # Same partition up to label permutation.
        a = res.labels[truth == 0]
        b = res.labels[truth == 1]
        assert len(set(a.tolist())) == 1
        assert len(set(b.tolist())) == 1
        assert a[0] != b[0]

    def test_labels_use_nearest_center(self):
        rng = np.random.default_rng(4)
        x, _ = blobs(rng, [np.zeros(2), np.full(2, 8.0), np.array([0.0, 8.0])],
                     n_per=15, spread=0.4)
        res = kmeans(x, 3, seed=1)
        d2 = ((x[:, None, :] - res.centers[None, :, :]) ** 2).sum(axis=2)
        own = d2[np.arange(len(x)), res.labels]
        assert np.all(own <= d2.min(axis=1) + 1e-12)

    def test_inertia_non_increasing_within_lloyd(self):
        rng = np.random.default_rng(5)
        x = rng.uniform(size=(60, 2))
        centers = _plusplus_seed(x, 4, rng)
        _, _, _, history = _lloyd(x, centers, rng)
        assert np.all(np.diff(history) <= 1e-10)

    def test_seeded_reproducibility(self):
        rng = np.random.default_rng(6)
        x = rng.uniform(size=(40, 2))
        a = kmeans(x, 3, seed=42)
        b = kmeans(x, 3, seed=42)
        assert np.array_equal(a.labels, b.labels)
        assert np.array_equal(a.centers, b.centers)
        assert a.inertia == b.inertia

    def test_min_size_enforced_on_outlier(self):
        rng = np.random.default_rng(7)
        x = np.vstack([rng.normal(size=(9, 1)), [[50.0]]])
        res = kmeans(x, 2, seed=0)
        sizes = np.bincount(res.labels, minlength=2)
        assert sizes.min() >= 2

    def test_no_empty_cluster(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=(30, 2))
        for k in [2, 3, 5, 7]:
            res = kmeans(x, k, seed=3)
            assert np.bincount(res.labels, minlength=k).min() >= 1


class TestMinClusterSize:
    def test_follows_dimension(self):
        assert min_cluster_size(100, 1, 4) == 2
        assert min_cluster_size(100, 2, 4) == 3
        assert min_cluster_size(100, 8, 5) == 9

    def test_capped_by_feasibility(self):
        assert min_cluster_size(10, 8, 5) == 2
        assert min_cluster_size(6, 1, 6) == 1
