import numpy as np
import pytest
from scipy.special import expit, logsumexp

from clustergp.exceptions import EmptyClass
from clustergp.gating import (
    GatingModel,
    _ascend,
    _penalized_ll,
    fit_gating,
    gating_log_probs,
    gating_probs,
)


def scratch_binary_logistic(x, t, ridge, scale, iters=60):
    """Newton's method for P(t=1) = sigmoid(b0 + b x), penalizing the slopes
    in standardized units: 0.5 * ridge * sum((b_l * scale_l)^2)."""
    x1 = np.hstack([np.ones((x.shape[0], 1)), x])
    pen = np.concatenate([[0.0], ridge * scale**2])
    beta = np.zeros(x1.shape[1])
    for _ in range(iters):
        p = expit(x1 @ beta)
        grad = x1.T @ (t - p) - pen * beta
        w = p * (1.0 - p)
        hess = -(x1.T * w) @ x1 - np.diag(pen)
        beta = beta - np.linalg.solve(hess, grad)
    return beta


class TestGatingProbs:
    def test_zero_coefficients_uniform(self):
        m = GatingModel(n_classes=3, intercepts=np.zeros(2), slopes=np.zeros((2, 2)))
        p = gating_probs(m, np.array([0.3, -1.0]))
        assert np.max(np.abs(p - 1.0 / 3.0)) <= 1e-15

    def test_binary_zero_score_point(self):
        m = GatingModel(n_classes=2, intercepts=np.array([0.0]),
                        slopes=np.array([[1.0]]))
        p = gating_probs(m, np.array([0.0]))
        assert np.allclose(p, [0.5, 0.5])

    def test_matches_extended_precision_softmax(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            k, d = int(rng.integers(2, 5)), int(rng.integers(1, 4))
            m = GatingModel(
                n_classes=k,
                intercepts=rng.normal(size=k - 1),
                slopes=rng.normal(size=(k - 1, d)),
            )
            x = rng.normal(size=d)
            scores = np.concatenate([m.intercepts + m.slopes @ x, [0.0]])
            hi = np.exp(scores.astype(np.longdouble))
            want = (hi / hi.sum()).astype(float)
            assert np.max(np.abs(gating_probs(m, x) - want)) <= 1e-12

    def test_probabilities_sum_to_one(self):
        rng = np.random.default_rng(4)
        m = GatingModel(n_classes=4, intercepts=rng.normal(size=3),
                        slopes=rng.normal(size=(3, 2)))
        p = gating_probs(m, rng.normal(size=(50, 2)))
        assert np.max(np.abs(p.sum(axis=1) - 1.0)) <= 1e-12

    def test_translation_invariance_of_softmax(self):
        rng = np.random.default_rng(5)
        scores = rng.normal(size=6)
        for shift in [0.0, 3.0, -1e4, 1e4]:
            s = scores + shift
            p = np.exp(s - logsumexp(s))
            base = np.exp(scores - logsumexp(scores))
            assert np.max(np.abs(p - base)) <= 1e-12

    def test_huge_scores_do_not_overflow(self):
        m = GatingModel(n_classes=2, intercepts=np.array([1000.0]),
                        slopes=np.array([[0.0]]))
        p = gating_probs(m, np.array([0.0]))
        assert np.isfinite(p).all()
        assert abs(p[0] - 1.0) <= 1e-12
        lp = gating_log_probs(m, np.array([[0.0]]))
        assert np.isfinite(lp).all()


class TestFitGating:
    def test_separable_labels_recovered(self):
        x = np.linspace(0.0, 1.0, 30)[:, None]
        z = (x[:, 0] > 0.5).astype(int)
        m = fit_gating(x, z, ridge=0.01)
        pred = np.argmax(gating_probs(m, x), axis=1)
        assert np.array_equal(pred, z)

    def test_random_labels_match_frequencies_at_centroid(self):
        rng = np.random.default_rng(11)
        x = rng.uniform(0.0, 1.0, size=(500, 2))
        z = rng.choice(3, size=500, p=[0.5, 0.3, 0.2])
        m = fit_gating(x, z, ridge=1e-4 * 500)
        freqs = np.bincount(z, minlength=3) / 500
        p = gating_probs(m, x.mean(axis=0))
        assert np.max(np.abs(p - freqs)) <= 0.05

    def test_binary_matches_scratch_newton(self):
        rng = np.random.default_rng(12)
        x = rng.normal(size=(80, 2))
        z = (x[:, 0] + 0.5 * x[:, 1] + 0.3 * rng.normal(size=80) > 0).astype(int)
        ridge = 0.5
        m = fit_gating(x, z, ridge=ridge)
        scale = x.std(axis=0)
        want = scratch_binary_logistic(x, (z == 0).astype(float), ridge, scale)
        got = np.concatenate([m.intercepts, m.slopes[0]])
        assert np.max(np.abs(got - want)) <= 1e-4

    def test_penalized_ll_monotone(self):
        rng = np.random.default_rng(13)
        x = rng.normal(size=(60, 2))
        z = rng.integers(0, 3, size=60)
        x1 = np.hstack([np.ones((60, 1)), (x - x.mean(0)) / x.std(0)])
        onehot = np.zeros((60, 3), dtype=bool)
        onehot[np.arange(60), z] = True
        _, history = _ascend(np.zeros((2, 3)), x1, onehot, ridge=0.1)
        diffs = np.diff(history)
        assert np.all(diffs >= -1e-12)

    def test_standardization_map_back_exact(self):
        rng = np.random.default_rng(14)
        x = rng.uniform(5.0, 9.0, size=(40, 3)) * np.array([1.0, 100.0, 0.01])
        z = rng.integers(0, 2, size=40)
        z[:2] = [0, 1]
        m = fit_gating(x, z, ridge=0.3)
        mean, scale = x.mean(axis=0), x.std(axis=0)
        coef_slopes = m.slopes * scale
        coef_b0 = m.intercepts + m.slopes @ mean
        grid = rng.uniform(5.0, 9.0, size=(25, 3)) * np.array([1.0, 100.0, 0.01])
        s_std = (grid - mean) / scale @ coef_slopes.T + coef_b0
        s_std = np.hstack([s_std, np.zeros((25, 1))])
        want = np.exp(s_std - logsumexp(s_std, axis=1, keepdims=True))
        assert np.max(np.abs(gating_probs(m, grid) - want)) <= 1e-9

    def test_empty_class_raises(self):
        x = np.zeros((4, 1))
        with pytest.raises(EmptyClass):
            fit_gating(x, np.array([0, 0, 2, 2]), n_classes=3)

    def test_single_class_trivial(self):
        m = fit_gating(np.zeros((3, 2)), np.zeros(3, dtype=int), n_classes=1)
        assert np.allclose(gating_probs(m, np.array([1.0, 2.0])), [1.0])

    def test_deterministic(self):
        rng = np.random.default_rng(15)
        x = rng.normal(size=(50, 2))
        z = rng.integers(0, 3, size=50)
        a = fit_gating(x, z, ridge=0.05)
        b = fit_gating(x, z, ridge=0.05)
        assert np.array_equal(a.intercepts, b.intercepts)
        assert np.array_equal(a.slopes, b.slopes)

    def test_warm_start_no_worse_than_cold(self):
        rng = np.random.default_rng(16)
        x = rng.normal(size=(70, 2))
        z = (x[:, 0] > 0.2).astype(int)
        cold = fit_gating(x, z, ridge=0.2)
        warm = fit_gating(x, z, ridge=0.2, init=cold)
        mean, scale = x.mean(axis=0), x.std(axis=0)
        x1 = np.hstack([np.ones((70, 1)), (x - mean) / scale])
        onehot = np.zeros((70, 2), dtype=bool)
        onehot[np.arange(70), z] = True

        def pll(m):
            coef = np.hstack([(m.intercepts + m.slopes @ mean)[:, None],
                              m.slopes * scale])
            return _penalized_ll(coef, x1, onehot, 0.2)

        assert pll(warm) >= pll(cold) - 1e-9
