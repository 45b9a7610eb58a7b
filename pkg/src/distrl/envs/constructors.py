"""Environment constructors: the lower-bound hard instances and generic processes.

Hard instances reject parameters outside the regime the proofs analyse
(Bernoulli means within a quarter of 1/2) instead of clipping them.
"""

from __future__ import annotations

import numpy as np

from ..errors import BadDims, BadLambda, DeltaTooLarge, GammaTooLarge, NotADistribution, ZeroVector
from ..linalg import FeatureMatrix, as_parameter_vector
from .features import householder_to_uniform, scaled_coordinate_rows
from .spec import EnvironmentSpec, EnvKind, NoiseKind, RewardNoise

MAX_GAMMA = 0.99
OFFSET_LIMIT = 0.25
_EPS = 1e-12


def random_signs(k: int, seed: int) -> list[int]:
    rng = np.random.default_rng(seed)
    return (2 * rng.integers(0, 2, size=k) - 1).tolist()


def _signs(v, k: int) -> np.ndarray:
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.size != k or not np.all(np.isin(v, (-1.0, 1.0))):
        raise BadDims(f"sign vector must have {k} entries in {{-1, +1}}")
    return v


def _features(X: np.ndarray) -> tuple[FeatureMatrix, tuple[str, ...]]:
    norms = np.sum(X * X, axis=1)
    if np.all(norms <= 1 + 1e-9):
        return FeatureMatrix(X), ()
    note = f"feature rows have squared norm up to {norms.max():.4g} > 1 (row-normalisation assumption violated)"
    return FeatureMatrix(X, normalized=False), (note,)


def _check_gamma(gamma: float):
    if not 0 < gamma < MAX_GAMMA:
        raise GammaTooLarge(f"gamma must lie in (0, {MAX_GAMMA}), got {gamma}")


def stay_jump_kernel(S: int, p: float) -> np.ndarray:
    """Stay with probability ``1 - p``, else jump uniformly to one of the other states."""
    if S < 2:
        raise BadDims("the stay/jump kernel needs at least two states")
    if not 0 <= p <= 1:
        raise ValueError(f"jump probability must lie in [0, 1], got {p}")
    P = np.full((S, S), p / (S - 1))
    np.fill_diagonal(P, 1 - p)
    return P


def stationary_distribution(P) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    S = P.shape[0]
    if P.shape != (S, S) or np.any(P < -1e-15) or not np.allclose(P.sum(1), 1.0, atol=1e-12):
        raise NotADistribution("transition matrix rows must be probability vectors")
    A = np.vstack([P.T - np.eye(S), np.ones((1, S))])
    b = np.zeros(S + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def _is_irreducible(P: np.ndarray) -> bool:
    S = P.shape[0]
    reach = (np.eye(S) + (P > 0)) > 0
    for _ in range(S):
        reach = (reach.astype(int) @ reach.astype(int)) > 0
    return bool(reach.all())


def _is_aperiodic(P: np.ndarray) -> bool:
    # a primitive matrix has P^k > 0 for some k <= (S-1)^2 + 1
    S = P.shape[0]
    M = (P > 0).astype(int)
    Q = M.copy()
    for _ in range((S - 1) ** 2 + 1):
        if Q.all():
            return True
        Q = ((Q @ M) > 0).astype(int)
    return bool(Q.all())


def stay_reward_mean(value: float, gamma: float, p: float) -> float:
    """Stay-reward mean that makes ``value`` consistent once jump rewards cancel the neighbours."""
    return value * (1 - gamma + p * gamma) / (1 - p)


def jump_rewards(values, gamma: float) -> np.ndarray:
    """``r0_j = -gamma * mean of the other states' values``, for every origin ``j``."""
    v = np.asarray(values, dtype=float)
    S = v.size
    return -gamma * (v.sum() - v) / (S - 1)


def hard_bandit(A, C, n, lambda_min, r_max, delta, v) -> EnvironmentSpec:
    """Coordinate-context bandit with +-r_max rewards.

    The first ``C`` contexts of every arm are ``sqrt(lambda_min * n) * e_l``,
    the remaining ``n - C`` are zero; ``theta_j = delta * v_j``.
    """
    if A < 1 or C < 1 or n < C:
        raise BadDims(f"need A >= 1, C >= 1 and n >= C (got A={A}, C={C}, n={n})")
    if not lambda_min > 0:
        raise BadLambda("lambda_min must be positive")
    if not r_max > 0:
        raise ValueError("r_max must be positive")
    if abs(delta) * np.sqrt(n * lambda_min) > r_max / 4 + _EPS:
        raise DeltaTooLarge(
            f"|delta| * sqrt(n * lambda_min) = {abs(delta) * np.sqrt(n * lambda_min):.4g} exceeds r_max / 4"
        )
    signs = _signs(v, A * C)
    theta = delta * signs
    X, notes = _features(scaled_coordinate_rows(n, C, np.sqrt(lambda_min * n)))
    mean = theta.reshape(A, C) @ X.entries.T
    return EnvironmentSpec(
        kind=EnvKind.BANDIT,
        name="hard_bandit",
        params=dict(A=A, C=C, n=n, lambda_min=lambda_min, r_max=r_max, delta=delta, v=signs.astype(int).tolist()),
        true_theta=theta,
        features=X,
        r_max=r_max,
        lambda_min=lambda_min,
        reward_mean=mean,
        noise=RewardNoise(NoiseKind.TWO_POINT, amplitude=r_max),
        n_arms=A,
        notes=notes,
    )


def hard_episodic(S_h, C, H, h, E, lambda_min, r_max, delta, v) -> EnvironmentSpec:
    """Good/bad-action episodic instance seen from level ``h``.

    From level-h state ``j`` the agent takes the good action (reward +r_max
    for every remaining step) with probability
    ``1/2 + c_j^T theta / (2 (H - h) r_max)``, the bad one (-r_max) otherwise.
    """
    if C < 1 or S_h < C:
        raise BadDims(f"need S_h >= C >= 1 (got S_h={S_h}, C={C})")
    if not 0 <= h < H:
        raise BadDims(f"need 0 <= h < H (got h={h}, H={H})")
    if E < 1:
        raise BadDims("need at least one episode per state")
    if not lambda_min > 0:
        raise BadLambda("lambda_min must be positive")
    signs = _signs(v, C)
    theta = delta * signs
    X, notes = _features(scaled_coordinate_rows(S_h, C, np.sqrt(lambda_min * S_h)))
    returns = X.entries @ theta
    offset = np.abs(returns).max() / (2 * (H - h) * r_max)
    if offset > OFFSET_LIMIT + _EPS:
        raise DeltaTooLarge(f"Bernoulli mean offset {offset:.4g} exceeds {OFFSET_LIMIT}")
    return EnvironmentSpec(
        kind=EnvKind.EPISODIC,
        name="hard_episodic",
        params=dict(S_h=S_h, C=C, H=H, h=h, E=E, lambda_min=lambda_min, r_max=r_max, delta=delta,
                    v=signs.astype(int).tolist()),
        true_theta=theta,
        features=X,
        r_max=r_max,
        lambda_min=lambda_min,
        reward_mean=returns,
        noise=RewardNoise(NoiseKind.GOOD_BAD, amplitude=r_max),
        horizon=H,
        level=h,
        episodes_per_state=E,
        notes=notes,
    )


def hard_nonepisodic(S, C, gamma, p, lambda_min, r_max, delta, v) -> EnvironmentSpec:
    """Stay/jump chain whose discounted values are ``c_j^T theta``.

    Staying in ``j`` pays ``(1/99)(2 b - 1) r_max`` with ``b`` Bernoulli, tuned
    so its mean is ``v(j)(1 - gamma + p gamma)/(1 - p)``; jumping pays the
    deterministic ``r0_j`` that cancels the neighbours' discounted values.
    """
    if S != C:
        raise BadDims(f"the non-episodic hard instance needs S == C (got S={S}, C={C})")
    if S < 2:
        raise BadDims("need at least two states")
    _check_gamma(gamma)
    if not 0 < p <= 1:
        raise ValueError(f"jump probability must lie in (0, 1], got {p}")
    if not lambda_min > 0:
        raise BadLambda("lambda_min must be positive")
    signs = _signs(v, C)
    theta = delta * signs
    X, notes = _features(scaled_coordinate_rows(S, C, np.sqrt(lambda_min * S)))
    values = X.entries @ theta
    if p == 1:
        if np.any(values != 0):
            raise DeltaTooLarge("with p = 1 the chain never stays; only delta = 0 is consistent")
        stay = np.zeros(S)
    else:
        stay = values * (1 - gamma + p * gamma) / (1 - p)
    amplitude = r_max / 99
    offset = np.abs(stay).max() / (2 * amplitude)
    if offset > OFFSET_LIMIT + _EPS:
        raise DeltaTooLarge(f"stay-reward Bernoulli offset {offset:.4g} exceeds {OFFSET_LIMIT}")
    if np.abs(values).max() > 0.99 * r_max / (1 - gamma) + _EPS:
        raise DeltaTooLarge("value magnitudes exceed 0.99 r_max / (1 - gamma)")
    r0 = jump_rewards(values, gamma)
    P = stay_jump_kernel(S, p)
    mean = np.repeat(r0[:, None], S, axis=1)
    np.fill_diagonal(mean, stay)
    amp = np.zeros((S, S))
    np.fill_diagonal(amp, amplitude)
    notes = notes + (() if _is_aperiodic(P) else ("transition kernel is periodic",))
    return EnvironmentSpec(
        kind=EnvKind.NON_EPISODIC,
        name="hard_nonepisodic",
        params=dict(S=S, C=C, gamma=gamma, p=p, lambda_min=lambda_min, r_max=r_max, delta=delta,
                    v=signs.astype(int).tolist()),
        true_theta=theta,
        features=X,
        r_max=r_max,
        lambda_min=lambda_min,
        reward_mean=mean,
        noise=RewardNoise(NoiseKind.TWO_POINT, amplitude=amp),
        gamma=gamma,
        jump_prob=p,
        transition=P,
        stationary_dist=np.full(S, 1.0 / S),
        notes=notes,
    )


def _headroom_noise(mean: np.ndarray, r_max: float, noise: str, noise_scale: float) -> RewardNoise:
    kind = NoiseKind(noise)
    if kind in (NoiseKind.GOOD_BAD,):
        raise ValueError("good_bad noise is reserved for the hard episodic instance")
    if kind is NoiseKind.TWO_POINT:
        amp = r_max if noise_scale == 0 else noise_scale
        if np.abs(mean).max() / (2 * amp) > OFFSET_LIMIT + _EPS:
            raise DeltaTooLarge("two-point reward mean outside the [1/4, 3/4] Bernoulli regime")
        return RewardNoise(kind, amplitude=amp)
    if not 0 <= noise_scale <= 1:
        raise ValueError("noise_scale is a fraction of the reward headroom and must lie in [0, 1]")
    return RewardNoise(kind, scale=noise_scale)


def generic_bandit(contexts, theta, r_max, noise="uniform", noise_scale=1.0) -> EnvironmentSpec:
    """Bandit with user-given contexts (shared by all arms) and bounded noise.

    ``theta`` is ``(A, C)`` or the flat concatenation. Uniform/gaussian noise
    uses ``noise_scale`` times the headroom ``r_max - |mean|``; two-point noise
    uses amplitude ``noise_scale`` (``r_max`` when 0).
    """
    X = FeatureMatrix(contexts)
    th = np.asarray(theta, dtype=float)
    if th.ndim == 1:
        if th.size % X.cols:
            raise BadDims("flat theta length must be a multiple of the context dimension")
        th = th.reshape(-1, X.cols)
    if th.shape[1] != X.cols:
        raise BadDims(f"theta has {th.shape[1]} columns, contexts have {X.cols}")
    mean = th @ X.entries.T
    if np.abs(mean).max() > r_max:
        raise DeltaTooLarge("some expected reward exceeds r_max")
    nz = _headroom_noise(mean, r_max, noise, noise_scale)
    return EnvironmentSpec(
        kind=EnvKind.BANDIT,
        name="generic_bandit",
        params=dict(contexts=X.tolist(), theta=th.tolist(), r_max=r_max, noise=noise, noise_scale=noise_scale),
        true_theta=th.reshape(-1),
        features=X,
        r_max=r_max,
        lambda_min=X.lambda_min,
        reward_mean=mean,
        noise=nz,
        n_arms=th.shape[0],
    )


def generic_episodic(features, theta, H, h, E, r_max, noise="uniform", noise_scale=1.0) -> EnvironmentSpec:
    """Episodic process from level ``h`` with independent per-step noise.

    Each of the ``H - h`` steps from state ``j`` has mean ``c_j^T theta / (H - h)``.
    """
    X = FeatureMatrix(features)
    theta = as_parameter_vector(theta)
    if theta.size != X.cols:
        raise BadDims("theta length must match the feature dimension")
    if not 0 <= h < H or E < 1:
        raise BadDims("need 0 <= h < H and E >= 1")
    returns = X.entries @ theta
    step_mean = returns / (H - h)
    if np.abs(step_mean).max() > r_max:
        raise DeltaTooLarge("per-step expected reward exceeds r_max")
    nz = _headroom_noise(step_mean, r_max, noise, noise_scale)
    return EnvironmentSpec(
        kind=EnvKind.EPISODIC,
        name="generic_episodic",
        params=dict(features=X.tolist(), theta=theta.tolist(), H=H, h=h, E=E, r_max=r_max, noise=noise,
                    noise_scale=noise_scale),
        true_theta=theta,
        features=X,
        r_max=r_max,
        lambda_min=X.lambda_min,
        reward_mean=returns,
        noise=nz,
        horizon=H,
        level=h,
        episodes_per_state=E,
    )


def _nonepisodic_from_values(name, params, X, theta, P, gamma, r_max, noise, noise_scale, notes=(), initial=None):
    _check_gamma(gamma)
    P = np.asarray(P, dtype=float)
    S = X.rows
    if P.shape != (S, S):
        raise BadDims(f"transition matrix must be {S} x {S}")
    pi = stationary_distribution(P)
    if not _is_irreducible(P):
        raise NotADistribution("transition kernel is not irreducible; no unique stationary distribution")
    if pi.max() <= 0.01:
        raise NotADistribution("stationary distribution must have pi_max > 0.01")
    values = X.entries @ theta
    expected = values - gamma * (P @ values)
    if np.abs(expected).max() > r_max:
        raise DeltaTooLarge("expected per-state reward exceeds r_max")
    mean = np.repeat(expected[:, None], S, axis=1)
    nz = _headroom_noise(mean, r_max, noise, noise_scale)
    if not _is_aperiodic(P):
        notes = notes + ("transition kernel is periodic",)
    lam = X.lambda_min
    return EnvironmentSpec(
        kind=EnvKind.NON_EPISODIC,
        name=name,
        params=params,
        true_theta=theta,
        features=X,
        r_max=r_max,
        lambda_min=lam,
        reward_mean=mean,
        noise=nz,
        gamma=gamma,
        transition=P,
        stationary_dist=pi,
        initial_theta=initial,
        notes=notes,
    )


def generic_nonepisodic(features, transition, theta, gamma, r_max, noise="two_point", noise_scale=0.0) -> EnvironmentSpec:
    """Markov reward process with ``v = X theta``; each state's reward mean is ``v - gamma P v``."""
    X = FeatureMatrix(features)
    theta = as_parameter_vector(theta)
    if theta.size != X.cols:
        raise BadDims("theta length must match the feature dimension")
    params = dict(features=X.tolist(), transition=np.asarray(transition, dtype=float).tolist(),
                  theta=theta.tolist(), gamma=gamma, r_max=r_max, noise=noise, noise_scale=noise_scale)
    return _nonepisodic_from_values("generic_nonepisodic", params, X, theta, transition, gamma, r_max,
                                    noise, noise_scale)


def max_adversarial_norm(C: int, gamma: float, r_max: float, lambda_min: float) -> float:
    """Largest ``||theta_hat_0||`` keeping the two-point reward mean in the analysed regime."""
    return r_max / (2 * (1 - gamma) * np.sqrt(lambda_min))


def adversarial_td_bias_env(theta_hat_0, S, gamma, r_max, lambda_min, p=0.5, norm=None) -> EnvironmentSpec:
    """Non-episodic instance where TD started at ``theta_hat_0`` carries maximal initial bias.

    Features are ``sqrt(lambda_min * C)`` times a reflection mapping the
    direction of ``theta_hat_0`` onto the constant vector, stacked ``S / C``
    times, so ``X^T X = lambda_min * S * I`` and ``X theta_hat_0`` is constant
    across states. The true parameter is ``-theta_hat_0``.
    """
    t0 = as_parameter_vector(theta_hat_0, "theta_hat_0")
    if not np.any(t0):
        raise ZeroVector("theta_hat_0 must be non-zero")
    C = t0.size
    if S < 2 or S % C:
        raise BadDims(f"S={S} must be a multiple of dim(theta_hat_0)={C} and at least 2")
    if not 0 < lambda_min <= 1 / C:
        raise BadLambda(f"lambda_min must lie in (0, 1/C] for unit-norm rows, got {lambda_min}")
    _check_gamma(gamma)
    limit = max_adversarial_norm(C, gamma, r_max, lambda_min)
    if norm == "max":
        t0 = t0 * (limit / np.linalg.norm(t0))
    elif norm is not None:
        t0 = t0 * (float(norm) / np.linalg.norm(t0))
    if np.linalg.norm(t0) > limit * (1 + 1e-12):
        raise DeltaTooLarge(f"||theta_hat_0|| = {np.linalg.norm(t0):.4g} exceeds the admissible {limit:.4g}")
    H = householder_to_uniform(t0)
    X = FeatureMatrix(np.sqrt(lambda_min * C) * H[np.arange(S) % C])
    P = stay_jump_kernel(S, p)
    params = dict(theta_hat_0=np.asarray(theta_hat_0, dtype=float).tolist(), S=S, gamma=gamma, r_max=r_max,
                  lambda_min=lambda_min, p=p, norm=norm)
    env = _nonepisodic_from_values("adversarial_td_bias_env", params, X, -t0, P, gamma, r_max, "two_point", 0.0,
                                   initial=t0)
    object.__setattr__(env, "jump_prob", p)
    return env


CONSTRUCTORS = {
    "hard_bandit": hard_bandit,
    "hard_episodic": hard_episodic,
    "hard_nonepisodic": hard_nonepisodic,
    "adversarial_td_bias_env": adversarial_td_bias_env,
    "generic_bandit": generic_bandit,
    "generic_episodic": generic_episodic,
    "generic_nonepisodic": generic_nonepisodic,
}


def env_from_dict(d: dict) -> EnvironmentSpec:
    d = dict(d)
    name = d.pop("constructor")
    if name not in CONSTRUCTORS:
        raise ValueError(f"unknown environment constructor {name!r}")
    return CONSTRUCTORS[name](**d)
