"""Dense SPD linear algebra and the power-exponential correlation kernel.

Correlation matrices here are always of the form ``Phi + nugget * I`` with
unit diagonal before the nugget.  ``SpdFactorization`` carries the Cholesky
factor, the explicit inverse and the log-determinant together, because the
Gibbs assignment step, the LOOCV shortcut and prediction all consume inverse
entries directly.  ``augment_inverse`` / ``diminish_inverse`` update a
factorization in O(n^2) when one point joins or leaves the underlying set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, solve_triangular

from .exceptions import NonpositiveSchurComplement, NotPositiveDefinite, SingletonSet

__all__ = [
    "CorrelationSpec",
    "SpdFactorization",
    "corr_matrix",
    "corr_cross",
    "factorize",
    "augment_inverse",
    "diminish_inverse",
]


@dataclass(frozen=True)
class CorrelationSpec:
    """Power-exponential correlation: exp{-(sum_l (gamma_l * dx_l)^2)^(p/2)}.

    Parameters
    ----------
    gamma : ndarray of shape (d,)
        Per-dimension decay rates, all strictly positive.
    power : float
        Exponent p in (0, 2].  p = 2 gives the anisotropic squared
        exponential exp{-sum_l gamma_l^2 dx_l^2}.
    nugget : float
        Nonnegative constant added to the diagonal for numerical stability.
    """

    gamma: np.ndarray
    power: float = 2.0
    nugget: float = 0.0

    def __post_init__(self):
        gamma = np.atleast_1d(np.asarray(self.gamma, dtype=float))
        object.__setattr__(self, "gamma", gamma)
        if gamma.ndim != 1 or gamma.size == 0:
            raise ValueError("gamma must be a nonempty 1-D array")
        if not np.all(gamma > 0):
            raise ValueError("all gamma components must be strictly positive")
        if not 0.0 < self.power <= 2.0:
            raise ValueError("power must lie in (0, 2]")
        if self.nugget < 0.0:
            raise ValueError("nugget must be nonnegative")

    @property
    def dim(self) -> int:
        return self.gamma.size


def _check_points(points: np.ndarray, spec: CorrelationSpec) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.shape[1] != spec.dim:
        raise ValueError(
            f"points have {pts.shape[1]} columns but gamma has length {spec.dim}"
        )
    return pts


def corr_matrix(points: np.ndarray, spec: CorrelationSpec) -> np.ndarray:
    """Correlation matrix of a point set, nugget added to the diagonal only."""
    pts = _check_points(points, spec)
    scaled = pts * spec.gamma
    sq = _sq_dists(scaled, scaled)
    np.fill_diagonal(sq, 0.0)
    if spec.power == 2.0:
        mat = np.exp(-sq)
    else:
        mat = np.exp(-(sq ** (spec.power / 2.0)))
    if spec.nugget:
        mat[np.diag_indices_from(mat)] += spec.nugget
    return mat


def corr_cross(a: np.ndarray, b: np.ndarray, spec: CorrelationSpec) -> np.ndarray:
    """Rectangular correlation block between two point sets (no nugget)."""
    pa = _check_points(a, spec) * spec.gamma
    pb = _check_points(b, spec) * spec.gamma
    sq = _sq_dists(pa, pb)
    if spec.power == 2.0:
        return np.exp(-sq)
    return np.exp(-(sq ** (spec.power / 2.0)))


def _sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # ||a_i - b_j||^2 via the expansion; clip small negative round-off.
    sq = (a * a).sum(axis=1)[:, None] + (b * b).sum(axis=1)[None, :] - 2.0 * a @ b.T
    return np.maximum(sq, 0.0)


@dataclass(frozen=True)
class SpdFactorization:
    """Cholesky factor, explicit inverse and log-determinant of an SPD matrix.

    Immutable: the update routines return new instances.
    """

    order: int
    factor: np.ndarray  # lower triangular L with A = L L^T
    inverse: np.ndarray  # Q = A^{-1}, kept symmetric
    logdet: float


def factorize(mat: np.ndarray) -> SpdFactorization:
    """Factorize a symmetric positive-definite matrix.

    Raises
    ------
    NotPositiveDefinite
        If the Cholesky factorization fails, which usually signals a nugget
        that is too small or duplicated input points.
    """
    a = np.asarray(mat, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("expected a square matrix")
    try:
        lower, _ = cho_factor(a, lower=True, check_finite=False)
    except LinAlgError as err:
        raise NotPositiveDefinite(str(err)) from None
    lower = np.tril(lower)
    n = a.shape[0]
    inv_l = solve_triangular(lower, np.eye(n), lower=True, check_finite=False)
    inverse = inv_l.T @ inv_l
    inverse = 0.5 * (inverse + inverse.T)
    logdet = 2.0 * float(np.sum(np.log(np.diag(lower))))
    return SpdFactorization(order=n, factor=lower, inverse=inverse, logdet=logdet)


def augment_inverse(
    fact: SpdFactorization, cross: np.ndarray, self_corr: float
) -> SpdFactorization:
    """Factorization of the matrix grown by one trailing row/column.

    ``cross`` holds the correlations between the existing points and the new
    one, ``self_corr`` its self-correlation (1 + nugget).  The inverse is
    updated by the partitioned-inverse identities: with B the current inverse,
    V = cross and s = self_corr - V^T B V, the new inverse has corner 1/s,
    off-block -BV/s and body B + (BV)(BV)^T / s.  Cost O(n^2).

    Raises
    ------
    NonpositiveSchurComplement
        If s <= 0, i.e. the new point numerically duplicates an existing one.
    """
    v = np.asarray(cross, dtype=float).reshape(-1)
    n = fact.order
    if v.shape[0] != n:
        raise ValueError(f"cross has length {v.shape[0]}, expected {n}")
    if n == 0:
        if self_corr <= 0.0:
            raise NonpositiveSchurComplement("self-correlation must be positive")
        return SpdFactorization(
            order=1,
            factor=np.array([[np.sqrt(self_corr)]]),
            inverse=np.array([[1.0 / self_corr]]),
            logdet=float(np.log(self_corr)),
        )
    bv = fact.inverse @ v
    schur = float(self_corr - v @ bv)
    if schur <= 0.0:
        raise NonpositiveSchurComplement(
            f"Schur complement {schur:.3e} <= 0; point duplicates an existing one"
        )
    inverse = np.empty((n + 1, n + 1))
    inverse[:n, :n] = fact.inverse + np.outer(bv, bv) / schur
    inverse[:n, n] = -bv / schur
    inverse[n, :n] = -bv / schur
    inverse[n, n] = 1.0 / schur

    # L grows by one row: L_new = [[L, 0], [w^T, sqrt(s)]] with L w = V.
    w = solve_triangular(fact.factor, v, lower=True, check_finite=False)
    factor = np.zeros((n + 1, n + 1))
    factor[:n, :n] = fact.factor
    factor[n, :n] = w
    factor[n, n] = np.sqrt(schur)
    return SpdFactorization(
        order=n + 1,
        factor=factor,
        inverse=inverse,
        logdet=fact.logdet + float(np.log(schur)),
    )


def diminish_inverse(fact: SpdFactorization, index: int) -> SpdFactorization:
    """Factorization of the matrix with row/column ``index`` removed.

    With Q the current inverse partitioned around the removed entry, the
    reduced inverse is Q_body - q q^T / q_ii, where q is the removed column
    without its diagonal entry.  The log-determinant shrinks by -log(q_ii)
    and the Cholesky factor is repaired with Givens rotations.  Cost O(n^2).
    """
    n = fact.order
    if n < 2:
        raise SingletonSet("cannot remove the only point of a factorization")
    if not 0 <= index < n:
        raise IndexError(f"index {index} out of range for order {n}")
    keep = np.arange(n) != index
    q_col = fact.inverse[keep, index]
    q_ii = fact.inverse[index, index]
    inverse = fact.inverse[np.ix_(keep, keep)] - np.outer(q_col, q_col) / q_ii
    inverse = 0.5 * (inverse + inverse.T)
    return SpdFactorization(
        order=n - 1,
        factor=_cholesky_delete(fact.factor, index),
        inverse=inverse,
        logdet=fact.logdet + float(np.log(q_ii)),
    )


def _cholesky_delete(lower: np.ndarray, index: int) -> np.ndarray:
    """Re-triangularize L after deleting row/column ``index``.

    Dropping row ``index`` of L leaves an (n-1) x n matrix M with
    M M^T equal to the reduced target; Givens rotations on column pairs
    (j, j+1) for j >= index restore the lower-triangular shape.
    """
    m = np.delete(lower, index, axis=0).copy()
    n1 = m.shape[0]
    for j in range(index, n1):
        a, b = m[j, j], m[j, j + 1]
        r = np.hypot(a, b)
        if r == 0.0:
            continue
        c, s = a / r, b / r
        col_j = m[j:, j].copy()
        col_j1 = m[j:, j + 1].copy()
        m[j:, j] = c * col_j + s * col_j1
        m[j:, j + 1] = -s * col_j + c * col_j1
        if m[j, j] < 0.0:
            m[j:, j] = -m[j:, j]
        m[j, j + 1] = 0.0
    return np.ascontiguousarray(m[:, :n1])
