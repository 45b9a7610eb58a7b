from __future__ import annotations

import numpy as np

from ..errors import BadLambda, NotDivisible, ZeroVector
from ..linalg import FeatureMatrix


def make_orthogonal_features(N: int, C: int, lambda_min: float, basis=None) -> FeatureMatrix:
    """Stack ``N / C`` copies of a scaled orthonormal basis.

    Row ``i`` is ``sqrt(lambda_min) * f[i mod C]`` so ``X^T X = lambda_min * (N / C) * I``.
    ``basis`` rows are the ``f_j`` (defaults to the standard basis).
    """
    if C < 1 or N < 1 or N % C:
        raise NotDivisible(f"N={N} is not a positive multiple of C={C}")
    if not 0 < lambda_min <= 1:
        raise BadLambda(f"lambda_min must lie in (0, 1], got {lambda_min}")
    F = np.eye(C) if basis is None else np.asarray(basis, dtype=float)
    if F.shape != (C, C) or not np.allclose(F @ F.T, np.eye(C), atol=1e-12):
        raise ValueError("basis must be a C x C matrix with orthonormal rows")
    rows = F[np.arange(N) % C]
    return FeatureMatrix(np.sqrt(lambda_min) * rows)


def scaled_coordinate_rows(rows: int, C: int, scale: float) -> np.ndarray:
    """First ``C`` rows are ``scale * e_k``, the rest are zero."""
    X = np.zeros((rows, C))
    X[np.arange(C), np.arange(C)] = scale
    return X


def householder_to_uniform(u) -> np.ndarray:
    """Orthogonal symmetric ``H`` with ``H @ u_hat = 1 / sqrt(C)``, ``u_hat = u / ||u||``."""
    u = np.asarray(u, dtype=float)
    norm = np.linalg.norm(u)
    if norm == 0:
        raise ZeroVector("cannot orient a basis along the zero vector")
    u = u / norm
    w = np.full(u.size, 1.0 / np.sqrt(u.size))
    v = u - w
    vv = v @ v
    if vv < 1e-24:
        return np.eye(u.size)
    return np.eye(u.size) - 2.0 * np.outer(v, v) / vv
