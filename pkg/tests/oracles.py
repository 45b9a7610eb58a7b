"""Reference computations written independently of the package code."""

from __future__ import annotations

import math
from fractions import Fraction


def gram(X):
    rows, cols = len(X), len(X[0])
    return [[sum(X[r][i] * X[r][j] for r in range(rows)) for j in range(cols)] for i in range(cols)]


def solve_pivoted(A, b):
    """Gauss-Jordan elimination with partial pivoting on plain lists."""
    n = len(A)
    M = [list(map(float, A[i])) + [float(b[i])] for i in range(n)]
    for col in range(n):
        pivot = max(range(col, n), key=lambda r: abs(M[r][col]))
        M[col], M[pivot] = M[pivot], M[col]
        p = M[col][col]
        if p == 0:
            raise ZeroDivisionError("singular system")
        for j in range(col, n + 1):
            M[col][j] /= p
        for r in range(n):
            if r != col and M[r][col] != 0:
                f = M[r][col]
                for j in range(col, n + 1):
                    M[r][j] -= f * M[col][j]
    return [M[i][n] for i in range(n)]


def normal_equation_solve(X, y):
    """theta = (X^T X)^{-1} X^T y by explicit pivoted elimination."""
    X = [list(map(float, row)) for row in X]
    rhs = [sum(X[r][j] * y[r] for r in range(len(X))) for j in range(len(X[0]))]
    return solve_pivoted(gram(X), rhs)


def nearest_level(value, v_min, v_max, precision):
    """Enumerate the grid in exact rational arithmetic; ties go to the lower index."""
    lo, p, v = Fraction(v_min), Fraction(precision), Fraction(value)
    count = math.ceil((Fraction(v_max) - lo) / p)
    best, best_dist = 0, None
    for i in range(count):
        d = abs(v - (lo + i * p))
        if best_dist is None or d < best_dist:
            best, best_dist = i, d
    return best, count


def exact_ratio(v_min, v_max, precision) -> Fraction:
    return (Fraction(v_max) - Fraction(v_min)) / Fraction(precision)


def char_poly_2x2_min_root(a, b, c):
    """Smallest eigenvalue of [[a, b], [b, c]] from the quadratic formula."""
    tr, det = a + c, a * c - b * b
    return tr / 2 - math.sqrt(tr * tr / 4 - det)


def nonepisodic_values_by_iteration(P, mean_reward, gamma, iters=5000):
    """Policy evaluation by repeated Bellman backups: v <- sum_s' P (r + gamma v)."""
    S = len(P)
    v = [0.0] * S
    for _ in range(iters):
        v = [sum(P[s][t] * (mean_reward[s][t] + gamma * v[t]) for t in range(S)) for s in range(S)]
    return v


def td_one_pass(states, next_states, rewards, X, theta0, gamma, beta, capital_lambda, omega):
    """Scalar-loop TD(0) with alpha_t = beta / (Lambda + t / omega), t from 1."""
    theta = list(map(float, theta0))
    C = len(theta)
    for t, (s, s2, r) in enumerate(zip(states, next_states, rewards), start=1):
        alpha = beta / (capital_lambda + t / omega)
        c, c2 = X[s], X[s2]
        err = r + gamma * sum(c2[k] * theta[k] for k in range(C)) - sum(c[k] * theta[k] for k in range(C))
        theta = [theta[k] + alpha * err * c[k] for k in range(C)]
    return theta
