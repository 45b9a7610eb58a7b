from __future__ import annotations

import numpy as np

from .spec import EnvironmentSpec, EnvKind, NoiseKind


def check_assumptions(env: EnvironmentSpec) -> list[str]:
    """Return human-readable violations of the modelling assumptions (empty when all hold)."""
    problems = []
    R = env.r_max
    if env.noise.kind is NoiseKind.TWO_POINT:
        amp = np.asarray(env.noise.amplitude, dtype=float)
        if amp.max() > R + 1e-12:
            problems.append("two-point reward amplitude exceeds r_max")
    elif env.noise.kind is NoiseKind.GOOD_BAD:
        if np.abs(env.reward_mean).max() > env.steps_after_level * R:
            problems.append("expected return exceeds (H - h) r_max")
    elif np.abs(env.reward_mean).max() > R + 1e-12:
        problems.append("expected reward exceeds r_max")
    X = env.features
    norms = np.sum(X.entries**2, axis=1)
    if norms.max() > 1 + 1e-9:
        problems.append("feature rows are not normalised")
    if not X.full_rank:
        problems.append("X^T X is singular")
    if env.kind is EnvKind.NON_EPISODIC:
        if not env.gamma < 0.99:
            problems.append("gamma must be below 0.99")
        pi = env.stationary_dist
        if pi.min() <= 0:
            problems.append("stationary distribution has an unreachable state")
        if pi.max() <= 0.01:
            problems.append("pi_max must exceed 0.01")
        if not np.allclose(pi @ env.transition, pi, atol=1e-10):
            problems.append("stationary_dist is not invariant under the transition kernel")
    return problems
