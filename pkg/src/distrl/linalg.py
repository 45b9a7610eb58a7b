"""Small dense linear algebra: symmetric eigensolver, least squares, spectral checks.

Everything here works on ``numpy`` arrays of modest size (a few hundred
columns at most). The symmetric eigensolver is a cyclic Jacobi sweep, and
least squares goes through the eigendecomposition of the Gram matrix rather
than QR, so that the objects the variance analysis talks about (eigenvalues
and eigenvectors of X^T X) are exactly the ones used in the solve.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DimensionMismatch, NotADistribution, NotSymmetric, RankDeficient

ROW_NORM_TOL = 1e-9
SYMMETRY_TOL = 1e-10
TIE_TOL = 1e-9


def as_parameter_vector(values, name: str = "theta") -> np.ndarray:
    """Validate and copy a parameter vector (1-D, non-empty, finite)."""
    v = np.atleast_1d(np.array(values, dtype=float))
    if v.ndim != 1 or v.size == 0:
        raise DimensionMismatch(f"{name} must be a non-empty 1-D vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} has non-finite entries")
    return v


def jacobi_eigh(M, tol: float = 1e-14, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvalues ascending and
    eigenvectors as columns, so ``M @ V == V @ diag(w)``.
    """
    A = np.array(M, dtype=float, copy=True)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {A.shape}")
    n = A.shape[0]
    V = np.eye(n)
    if n == 1:
        return A.diagonal().copy(), V
    scale = max(np.abs(A).max(), np.finfo(float).tiny)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.triu(A, 1) ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= 1e-300:
                    continue
                app, aqq = A[p, p], A[q, q]
                tau = (aqq - app) / (2.0 * apq)
                t = np.sign(tau) / (abs(tau) + np.sqrt(1.0 + tau * tau)) if tau != 0 else 1.0
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                # rotate columns p, q then rows p, q
                Ap, Aq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * Ap - s * Aq
                A[:, q] = s * Ap + c * Aq
                Ap, Aq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * Ap - s * Aq
                A[q, :] = s * Ap + c * Aq
                A[p, q] = A[q, p] = 0.0
                Vp, Vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * Vp - s * Vq
                V[:, q] = s * Vp + c * Vq
    w = A.diagonal().copy()
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]


def _check_symmetric(M: np.ndarray) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise NotSymmetric(f"expected a square matrix, got shape {M.shape}")
    if not np.allclose(M, M.T, rtol=0.0, atol=SYMMETRY_TOL):
        raise NotSymmetric("matrix is not symmetric within 1e-10")
    return 0.5 * (M + M.T)


def smallest_eigenvalue(M) -> float:
    w, _ = jacobi_eigh(_check_symmetric(M))
    return float(w[0])


def min_eigenvector(M) -> np.ndarray:
    """Unit eigenvector for the smallest eigenvalue.

    Among numerically tied eigenvalues the candidates are sign-normalised
    (first non-negligible entry positive) and the lexicographically first one
    is returned.
    """
    w, V = jacobi_eigh(_check_symmetric(M))
    tied = np.flatnonzero(w - w[0] <= TIE_TOL * max(1.0, abs(w[0])))
    candidates = []
    for j in tied:
        v = V[:, j] / np.linalg.norm(V[:, j])
        lead = np.flatnonzero(np.abs(v) > TIE_TOL)
        if lead.size and v[lead[0]] < 0:
            v = -v
        candidates.append(v)
    return min(candidates, key=lambda v: tuple(np.round(v, 12)))


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Rows are context/feature vectors, one per sample or state.

    ``normalized=True`` (the default) enforces the unit row-norm assumption.
    Hard instances whose scaled coordinate rows exceed norm 1 (large
    ``lambda_min * n``) are built with ``normalized=False``.
    """

    entries: np.ndarray
    normalized: bool = True
    _gram_eig: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        X = np.array(self.entries, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
            raise DimensionMismatch(f"feature matrix must be 2-D and non-empty, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise ValueError("feature matrix has non-finite entries")
        X.setflags(write=False)
        object.__setattr__(self, "entries", X)
        if self.normalized:
            norms = np.sum(X * X, axis=1)
            bad = np.flatnonzero(norms > 1.0 + ROW_NORM_TOL)
            if bad.size:
                raise ValueError(
                    f"row {int(bad[0])} has squared norm {norms[bad[0]]:.6g} > 1 "
                    "(context/feature vectors must be normalised)"
                )
        w, V = jacobi_eigh(X.T @ X)
        object.__setattr__(self, "_gram_eig", (w, V))

    @property
    def rows(self) -> int:
        return self.entries.shape[0]

    @property
    def cols(self) -> int:
        return self.entries.shape[1]

    @property
    def gram(self) -> np.ndarray:
        return self.entries.T @ self.entries

    @property
    def gram_eigenvalues(self) -> np.ndarray:
        return self._gram_eig[0]

    @property
    def gram_eigenvectors(self) -> np.ndarray:
        return self._gram_eig[1]

    @property
    def min_eigenvalue_gram(self) -> float:
        return float(self._gram_eig[0][0])

    @property
    def rank_tolerance(self) -> float:
        return 1e-10 * self.rows

    @property
    def full_rank(self) -> bool:
        return self.min_eigenvalue_gram > self.rank_tolerance

    @property
    def lambda_min(self) -> float:
        """Rescaled smallest Gram eigenvalue, ``eta_min / rows``."""
        return self.min_eigenvalue_gram / self.rows

    @cached_property
    def solver(self) -> "LeastSquaresOperator":
        return LeastSquaresOperator(self)

    def tolist(self) -> list[list[float]]:
        return self.entries.tolist()


class LeastSquaresOperator:
    """The linear map ``y -> (X^T X)^{-1} X^T y`` for a fixed design.

    Built once from the Gram eigendecomposition and then applied to many
    response vectors (all machines and trials share the design).
    """

    def __init__(self, X: FeatureMatrix):
        if not X.full_rank:
            raise RankDeficient(
                f"X^T X smallest eigenvalue {X.min_eigenvalue_gram:.3g} <= tolerance {X.rank_tolerance:.3g}"
            )
        w, Q = X.gram_eigenvalues, X.gram_eigenvectors
        self.shape = X.entries.shape
        self.matrix = (Q / w) @ Q.T @ X.entries.T

    def __call__(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if y.shape[-1] != self.shape[0]:
            raise DimensionMismatch(f"response has length {y.shape[-1]}, design has {self.shape[0]} rows")
        return y @ self.matrix.T


def least_squares(X, y) -> np.ndarray:
    """Minimise ``||X theta - y||^2`` via the eigendecomposition of ``X^T X``."""
    if not isinstance(X, FeatureMatrix):
        X = FeatureMatrix(X, normalized=False)
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.shape[0] != X.rows:
        raise DimensionMismatch(f"y has shape {y.shape}, expected ({X.rows},)")
    if not X.full_rank:
        raise RankDeficient(
            f"X^T X smallest eigenvalue {X.min_eigenvalue_gram:.3g} <= tolerance {X.rank_tolerance:.3g}"
        )
    w, Q = X.gram_eigenvalues, X.gram_eigenvectors
    return Q @ ((Q.T @ (X.entries.T @ y)) / w)


def weighted_gram_min_eigenvalue(features, weights) -> float:
    """Smallest eigenvalue of ``sum_s weights[s] * c_s c_s^T``."""
    X = features.entries if isinstance(features, FeatureMatrix) else np.asarray(features, dtype=float)
    pi = np.asarray(weights, dtype=float)
    if pi.ndim != 1 or pi.shape[0] != X.shape[0]:
        raise DimensionMismatch(f"{pi.shape[0] if pi.ndim == 1 else pi.shape} weights for {X.shape[0]} rows")
    if np.any(pi < 0) or abs(pi.sum() - 1.0) > 1e-9:
        raise NotADistribution("weights must be non-negative and sum to 1")
    sigma = (X * pi[:, None]).T @ X
    return max(smallest_eigenvalue(sigma), 0.0)
