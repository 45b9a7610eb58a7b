"""Distributed single-round estimators: local solves, quantised messages, central averaging.

Three local estimators are provided, each returning the parameter vector a
machine would transmit:

* ``lse_local``     per-arm least squares on bandit data;
* ``mc_lse_local``  first-visit Monte-Carlo returns regressed on state features;
* ``td_local``      one pass of linear TD(0) with the decaying step size
  ``alpha_t = beta / (Lambda + t / omega)``.

``run_distributed`` simulates ``m`` machines, quantises each local estimate
once and averages the dequantised messages at the server.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .envs import EnvironmentSpec, EnvKind
from .envs.history import BanditHistory, EpisodicHistory, NonEpisodicHistory, sample_history
from .errors import BadParams, DimensionMismatch, MachineError, RankDeficient, UnvisitedState
from .linalg import FeatureMatrix, as_parameter_vector, least_squares, weighted_gram_min_eigenvalue
from .quantize import QuantizedMessage, QuantizerConfig, dequantize_array, quantize_array
from .seeding import derive_seed

LOSSLESS_BITS = 64.0


class Algorithm(str, enum.Enum):
    LSE = "LSE"
    MC_LSE = "MC_LSE"
    TD = "TD"

    @classmethod
    def parse(cls, name) -> "Algorithm":
        if isinstance(name, cls):
            return name
        key = str(name).upper().replace(" ", "_").replace("-", "_")
        try:
            return cls(key)
        except ValueError:
            raise BadParams(f"unknown algorithm {name!r}; expected one of LSE, MC_LSE, TD") from None


EXPECTED_KIND = {Algorithm.LSE: EnvKind.BANDIT, Algorithm.MC_LSE: EnvKind.EPISODIC, Algorithm.TD: EnvKind.NON_EPISODIC}


@dataclass(frozen=True)
class TdSchedule:
    beta: float
    capital_lambda: float
    omega: float
    gamma: float

    def __post_init__(self):
        if not self.omega > 0:
            raise BadParams("omega must be positive; the weighted feature covariance is singular")
        if not 0 < self.gamma < 1:
            raise BadParams("gamma must lie in (0, 1)")
        if abs(self.beta - 2 / ((1 - self.gamma) * self.omega)) > 1e-12 * abs(self.beta):
            raise BadParams("beta must equal 2 / ((1 - gamma) omega)")
        if abs(self.capital_lambda - 16 / ((1 - self.gamma) ** 2 * self.omega)) > 1e-12 * abs(self.capital_lambda):
            raise BadParams("Lambda must equal 16 / ((1 - gamma)^2 omega)")

    @classmethod
    def from_omega(cls, omega: float, gamma: float) -> "TdSchedule":
        if not omega > 0:
            raise BadParams("omega must be positive; the weighted feature covariance is singular")
        return cls(2 / ((1 - gamma) * omega), 16 / ((1 - gamma) ** 2 * omega), omega, gamma)

    @classmethod
    def from_env(cls, env: EnvironmentSpec, omega: float | None = None) -> "TdSchedule":
        if omega is None:
            omega = weighted_gram_min_eigenvalue(env.features, env.stationary_dist)
        return cls.from_omega(omega, env.gamma)

    def alpha(self, t):
        return self.beta / (self.capital_lambda + np.asarray(t, dtype=float) / self.omega)


@dataclass(frozen=True, eq=False)
class EstimateBundle:
    per_machine_messages: list
    local_estimates: np.ndarray  # (m, dim), before quantisation
    final_estimate: np.ndarray
    total_bits_sent: float
    clamp_count: int

    @property
    def m(self) -> int:
        return len(self.per_machine_messages)


# ---------------------------------------------------------------------------
# local estimators

def lse_local(history: BanditHistory) -> np.ndarray:
    out = []
    for a in range(history.n_arms):
        X = FeatureMatrix(history.contexts[a], normalized=False)
        try:
            out.append(least_squares(X, history.rewards[a]))
        except RankDeficient as exc:
            raise RankDeficient(exc.detail, arm=a) from None
    return np.concatenate(out)


def first_visit_returns(history: EpisodicHistory, n_states: int) -> tuple[np.ndarray, np.ndarray]:
    """Summed first-visit returns and visit counts for states ``0..n_states-1``."""
    G = np.zeros(n_states)
    N = np.zeros(n_states, dtype=np.int64)
    for l in range(history.states.shape[0]):
        k = int(history.lengths[l])
        s = history.states[l, :k]
        tail = np.cumsum(history.rewards[l, :k][::-1])[::-1]
        tracked = (s >= 0) & (s < n_states)
        uniq, first = np.unique(s[tracked], return_index=True)
        first = np.flatnonzero(tracked)[first]
        G[uniq] += tail[first]
        N[uniq] += 1
    return G, N


def mc_lse_local(history: EpisodicHistory, features: FeatureMatrix) -> np.ndarray:
    G, N = first_visit_returns(history, features.rows)
    if np.any(N == 0):
        raise UnvisitedState(f"state {int(np.flatnonzero(N == 0)[0])} never visited")
    return least_squares(features, G / N)


def td_batch(states, next_states, rewards, X: np.ndarray, theta0, schedule: TdSchedule) -> np.ndarray:
    """Run TD(0) on ``B`` independent transition streams side by side.

    ``states``, ``next_states`` and ``rewards`` are ``(B, n)``; ``theta0`` is
    ``(B, C)``. Step ``t`` (1-based) uses ``alpha_t``.
    """
    theta = np.array(theta0, dtype=float, copy=True)
    n = states.shape[1]
    alphas = schedule.alpha(np.arange(1, n + 1))
    gamma = schedule.gamma
    for t in range(n):
        c = X[states[:, t]]
        c_next = X[next_states[:, t]]
        td_error = rewards[:, t] + gamma * np.sum(c_next * theta, axis=1) - np.sum(c * theta, axis=1)
        theta += (alphas[t] * td_error)[:, None] * c
    return theta


def td_local(history: NonEpisodicHistory, theta_0, schedule: TdSchedule, features: FeatureMatrix) -> np.ndarray:
    theta_0 = as_parameter_vector(theta_0, "theta_0")
    if theta_0.size != features.cols:
        raise DimensionMismatch(f"theta_0 has {theta_0.size} entries, features have {features.cols} columns")
    if len(history) == 0:
        raise ValueError("TD needs at least one transition")
    return td_batch(history.states[None], history.next_states[None], history.rewards[None],
                    features.entries, theta_0[None], schedule)[0]


# ---------------------------------------------------------------------------
# central server

def central_average(values: np.ndarray) -> np.ndarray:
    """Mean over the machine axis (second to last) by a fixed pairwise tree.

    The tree depends only on the machine count, so the result is bitwise
    independent of how the local estimates were produced.
    """
    x = np.asarray(values, dtype=float)
    m = x.shape[-2]
    while x.shape[-2] > 1:
        k = x.shape[-2]
        paired = x[..., 0 : k - 1 : 2, :] + x[..., 1:k:2, :]
        x = np.concatenate([paired, x[..., k - 1 :, :]], axis=-2) if k % 2 else paired
    return x[..., 0, :] / m


def _theta0_matrix(env, theta_0, count: int, machine_ids) -> np.ndarray:
    if theta_0 is None:
        theta_0 = env.initial_theta if env.initial_theta is not None else np.zeros(env.dim)
    t0 = np.asarray(theta_0, dtype=float)
    if t0.ndim == 1:
        if t0.size != env.dim:
            raise DimensionMismatch(f"theta_0 has {t0.size} entries, expected {env.dim}")
        return np.broadcast_to(t0, (count, env.dim))
    if t0.shape[1] != env.dim:
        raise DimensionMismatch(f"theta_0 rows have {t0.shape[1]} entries, expected {env.dim}")
    return t0[np.asarray(machine_ids) % t0.shape[0]]


def local_estimates(env: EnvironmentSpec, algorithm, seeds, size=None, theta_0=None, schedule=None,
                    machine_ids=None) -> np.ndarray:
    """Local estimates for machines with the given seeds, shape ``(len(seeds), dim)``.

    Uses precomputed least-squares operators for the environment's fixed
    design so many machines are solved at once; the answers match
    ``lse_local`` / ``mc_lse_local`` / ``td_local`` on the same histories.
    """
    algorithm = Algorithm.parse(algorithm)
    if env.kind is not EXPECTED_KIND[algorithm]:
        raise BadParams(f"{algorithm.value} needs a {EXPECTED_KIND[algorithm].value} environment, got {env.kind.value}")
    seeds = list(seeds)
    ids = np.arange(len(seeds)) if machine_ids is None else np.asarray(machine_ids)
    hist = [sample_history(env, s, size) for s in seeds]
    if algorithm is Algorithm.LSE:
        try:
            solver = env.features.solver
        except RankDeficient as exc:
            raise MachineError(int(ids[0]), RankDeficient(exc.detail, arm=0, machine=int(ids[0]))) from None
        rewards = np.stack([h.rewards for h in hist])
        return solver(rewards).reshape(len(seeds), -1)
    if algorithm is Algorithm.MC_LSE:
        S = env.n_states
        returns = np.stack([h.rewards.sum(axis=1) for h in hist])  # every episode starts at its level-h state
        start = hist[0].states[:, 0]
        counts = np.bincount(start, minlength=S)
        if np.any(counts == 0):
            raise UnvisitedState(f"state {int(np.flatnonzero(counts == 0)[0])} never visited")
        W = np.zeros((start.size, S))
        W[np.arange(start.size), start] = 1.0 / counts[start]
        try:
            solver = env.features.solver
        except RankDeficient as exc:
            raise MachineError(int(ids[0]), exc) from None
        return solver(returns @ W)
    schedule = schedule or TdSchedule.from_env(env)
    t0 = _theta0_matrix(env, theta_0, len(seeds), ids)
    return td_batch(
        np.stack([h.states for h in hist]),
        np.stack([h.next_states for h in hist]),
        np.stack([h.rewards for h in hist]),
        env.features.entries,
        t0,
        schedule,
    )


def transmit(estimates: np.ndarray, qcfg: QuantizerConfig | None) -> tuple[np.ndarray, int]:
    """What the server receives for each local estimate, and the number of clamped components."""
    if qcfg is None:
        return np.asarray(estimates, dtype=float), 0
    levels, clamped = quantize_array(estimates, qcfg)
    return dequantize_array(levels, qcfg), int(clamped.sum())


def bits_per_value(qcfg: QuantizerConfig | None) -> float:
    return LOSSLESS_BITS if qcfg is None else math.log2(qcfg.levels)


def run_distributed(env: EnvironmentSpec, algorithm, m: int, size=None, qcfg: QuantizerConfig | None = None,
                    base_seed: int = 0, theta_0=None, schedule: TdSchedule | None = None) -> EstimateBundle:
    """Simulate one round: ``m`` machines each send exactly one message, the server averages."""
    if m < 1:
        raise BadParams("need at least one machine")
    seeds = [derive_seed(base_seed, i) for i in range(m)]
    try:
        local = local_estimates(env, algorithm, seeds, size, theta_0, schedule)
    except MachineError:
        raise
    except RankDeficient as exc:
        raise MachineError(0, exc.with_machine(0)) from None
    if qcfg is None:
        messages = [row.copy() for row in local]
        received = local
        clamps = 0
    else:
        messages = []
        for row in local:
            levels, clamped = quantize_array(row, qcfg)
            messages.append(QuantizedMessage(levels, qcfg, clamp_count=int(clamped.sum())))
        received = np.stack([dequantize_array(msg.levels, qcfg) for msg in messages])
        clamps = sum(msg.clamp_count for msg in messages)
    assert len(messages) == m
    final = central_average(received)
    return EstimateBundle(messages, local, final, m * env.dim * bits_per_value(qcfg), clamps)


# ---------------------------------------------------------------------------
# bounds

def _positive(params: dict, *names):
    for name in names:
        value = params.get(name)
        if value is None:
            raise BadParams(f"missing parameter {name!r}")
        if not value > 0:
            raise BadParams(f"parameter {name!r} must be positive, got {value}")


def theoretical_bound(algorithm, **p) -> float:
    """Upper-bound value with all constants set to one.

    LSE:    ``A C max(R^2 / (m n lambda), P)``
    MC_LSE: ``C max((H - h)^2 R^2 / (m S E lambda), P)``
    TD:     ``max(max(R^2 / (S pi_min lambda m), bias_sq) / (1 + (1 - gamma)^2 n), C P)``
    """
    algorithm = Algorithm.parse(algorithm)
    P = p.get("P", 0.0) or 0.0
    if P < 0:
        raise BadParams("P must be non-negative")
    if algorithm is Algorithm.LSE:
        _positive(p, "A", "C", "R", "m", "n", "lam")
        return p["A"] * p["C"] * max(p["R"] ** 2 / (p["m"] * p["n"] * p["lam"]), P)
    if algorithm is Algorithm.MC_LSE:
        _positive(p, "C", "H_minus_h", "R", "m", "S", "E", "lam")
        return p["C"] * max(p["H_minus_h"] ** 2 * p["R"] ** 2 / (p["m"] * p["S"] * p["E"] * p["lam"]), P)
    _positive(p, "R", "S", "pi_min", "lam", "m", "n", "C", "gamma")
    if not p["gamma"] < 1:
        raise BadParams("gamma must be below 1")
    bias_sq = p.get("bias_sq", 0.0)
    if bias_sq < 0:
        raise BadParams("bias_sq must be non-negative")
    variance = p["R"] ** 2 / (p["S"] * p["pi_min"] * p["lam"] * p["m"])
    return max(max(variance, bias_sq) / (1 + (1 - p["gamma"]) ** 2 * p["n"]), p["C"] * P)


def optimal_bits(algorithm, **p) -> float:
    """Per-machine bit count from the summary table: ``AC log2(mn lambda / R)`` and friends."""
    algorithm = Algorithm.parse(algorithm)
    if algorithm is Algorithm.LSE:
        _positive(p, "A", "C", "R", "m", "n", "lam")
        return p["A"] * p["C"] * math.log2(p["m"] * p["n"] * p["lam"] / p["R"])
    if algorithm is Algorithm.MC_LSE:
        _positive(p, "C", "H_minus_h", "R", "m", "S", "E", "lam")
        return p["C"] * math.log2(p["m"] * p["S"] * p["E"] * p["lam"] / (p["H_minus_h"] * p["R"]))
    _positive(p, "C", "R", "S", "pi_min", "lam", "m")
    nu = max(p["R"] ** 2 / (p["S"] * p["pi_min"] * p["lam"] * p["m"]), p.get("bias_sq", 0.0))
    return p["C"] * math.log2(p["C"] / nu)


def bound_params(env: EnvironmentSpec, algorithm, m: int, size=None, qcfg: QuantizerConfig | None = None,
                 theta_0=None) -> dict:
    """Collect the arguments of ``theoretical_bound`` for a concrete run."""
    algorithm = Algorithm.parse(algorithm)
    P = 0.0 if qcfg is None else qcfg.precision
    common = dict(R=env.r_max, m=m, lam=env.lambda_min, P=P)
    if algorithm is Algorithm.LSE:
        return dict(common, A=env.n_arms, C=env.features.cols, n=env.features.rows)
    if algorithm is Algorithm.MC_LSE:
        E = env.episodes_per_state if size is None else size
        return dict(common, C=env.features.cols, H_minus_h=env.steps_after_level, S=env.n_states, E=E)
    t0 = _theta0_matrix(env, theta_0, m, np.arange(m))
    bias_sq = float(np.sum((env.true_theta - t0.mean(axis=0)) ** 2))
    return dict(common, S=env.n_states, pi_min=env.pi_min, C=env.features.cols, gamma=env.gamma, n=size,
                bias_sq=bias_sq)
