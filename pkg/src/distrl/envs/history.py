"""Offline gameplay histories: sampling, chain rollouts and a line-oriented text format."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from ..errors import BadDims
from ..seeding import make_rng
from .spec import EnvironmentSpec, EnvKind, NoiseKind, RewardNoise

UNTRACKED_STATE = -1


@dataclass(frozen=True, eq=False)
class BanditHistory:
    """Per-arm samples: ``contexts[a, l]`` and ``rewards[a, l]``."""

    contexts: np.ndarray  # (A, n, C)
    rewards: np.ndarray  # (A, n)

    @property
    def n_arms(self) -> int:
        return self.rewards.shape[0]

    @property
    def samples_per_arm(self) -> int:
        return self.rewards.shape[1]


@dataclass(frozen=True, eq=False)
class EpisodicHistory:
    """Episodes as padded arrays; steps past ``lengths[l]`` are ignored.

    Steps beyond level h of the hard instance visit no modelled state and are
    stored with state id ``UNTRACKED_STATE``.
    """

    states: np.ndarray  # (N, T) int
    actions: np.ndarray  # (N, T) int
    rewards: np.ndarray  # (N, T)
    lengths: np.ndarray  # (N,)

    @classmethod
    def from_episodes(cls, episodes) -> "EpisodicHistory":
        T = max(len(ep) for ep in episodes)
        N = len(episodes)
        states = np.full((N, T), UNTRACKED_STATE, dtype=np.int64)
        actions = np.zeros((N, T), dtype=np.int64)
        rewards = np.zeros((N, T))
        for l, ep in enumerate(episodes):
            for t, (s, a, r) in enumerate(ep):
                states[l, t], actions[l, t], rewards[l, t] = s, a, r
        return cls(states, actions, rewards, np.array([len(ep) for ep in episodes]))

    def episodes(self):
        for l in range(self.states.shape[0]):
            k = self.lengths[l]
            yield list(zip(self.states[l, :k].tolist(), self.actions[l, :k].tolist(), self.rewards[l, :k].tolist()))


@dataclass(frozen=True, eq=False)
class NonEpisodicHistory:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray

    def __len__(self) -> int:
        return self.states.size


def _two_point(rng, mean, amplitude):
    mean = np.asarray(mean, dtype=float)
    amp = np.broadcast_to(np.asarray(amplitude, dtype=float), mean.shape)
    u = rng.random(mean.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        prob_up = np.where(amp > 0, 0.5 + mean / (2 * np.where(amp > 0, amp, 1.0)), 0.0)
    return np.where(amp > 0, np.where(u < prob_up, amp, -amp), mean)


def _truncated_normal(rng, shape):
    # truncation at +-1 in units of the headroom; 0.5 is the standard deviation
    z = rng.normal(0.0, 0.5, size=shape)
    bad = np.abs(z) > 1
    while bad.any():
        z[bad] = rng.normal(0.0, 0.5, size=int(bad.sum()))
        bad = np.abs(z) > 1
    return z


def draw_rewards(rng: np.random.Generator, mean, noise: RewardNoise, r_max: float) -> np.ndarray:
    """Rewards around ``mean`` (any shape), always inside ``[-r_max, r_max]``."""
    mean = np.asarray(mean, dtype=float)
    kind = noise.kind
    if kind is NoiseKind.NONE:
        return mean.copy()
    if kind is NoiseKind.TWO_POINT:
        return _two_point(rng, mean, noise.amplitude)
    width = noise.scale * (r_max - np.abs(mean))
    if kind is NoiseKind.UNIFORM:
        return mean + width * rng.uniform(-1.0, 1.0, size=mean.shape)
    if kind is NoiseKind.GAUSSIAN:
        return mean + width * _truncated_normal(rng, mean.shape)
    raise ValueError(f"noise kind {kind} cannot be drawn per reward")


def reward_variance(mean, noise: RewardNoise, r_max: float) -> np.ndarray:
    """Exact per-reward variance of ``draw_rewards`` (used by oracles and tests)."""
    mean = np.asarray(mean, dtype=float)
    if noise.kind is NoiseKind.NONE:
        return np.zeros_like(mean)
    if noise.kind in (NoiseKind.TWO_POINT, NoiseKind.GOOD_BAD):
        amp = np.broadcast_to(np.asarray(noise.amplitude, dtype=float), mean.shape)
        return np.where(amp > 0, amp**2 - mean**2, 0.0)
    width = noise.scale * (r_max - np.abs(mean))
    if noise.kind is NoiseKind.UNIFORM:
        return width**2 / 3
    raise NotImplementedError("closed-form variance is only provided for none/two-point/uniform noise")


def _sample_bandit(env: EnvironmentSpec, rng, size):
    n = env.features.rows
    if size is not None and size != n:
        raise BadDims(f"bandit environment has {n} samples per arm, requested {size}")
    rewards = draw_rewards(rng, env.reward_mean, env.noise, env.r_max)
    contexts = np.broadcast_to(env.features.entries, (env.n_arms,) + env.features.entries.shape)
    return BanditHistory(contexts, rewards)


def _sample_episodic(env: EnvironmentSpec, rng, size):
    E = env.episodes_per_state if size is None else int(size)
    if E < 1:
        raise BadDims("need at least one episode per state")
    S, T = env.n_states, env.steps_after_level
    start = np.repeat(np.arange(S), E)
    states = np.full((S * E, T), UNTRACKED_STATE, dtype=np.int64)
    states[:, 0] = start
    if env.noise.kind is NoiseKind.GOOD_BAD:
        R = env.r_max
        good = rng.random(S * E) < 0.5 + env.reward_mean[start] / (2 * T * R)
        rewards = np.repeat(np.where(good, R, -R)[:, None], T, axis=1)
        actions = np.repeat(np.where(good, 0, 1)[:, None], T, axis=1)
    else:
        step_mean = np.repeat((env.reward_mean[start] / T)[:, None], T, axis=1)
        rewards = draw_rewards(rng, step_mean, env.noise, env.r_max)
        actions = np.zeros((S * E, T), dtype=np.int64)
    return EpisodicHistory(states, actions, rewards, np.full(S * E, T))


def _next_states(rng, P, states):
    cdf = np.cumsum(P, axis=1)
    cdf[:, -1] = 1.0
    u = rng.random(states.size)
    return np.minimum((u[:, None] >= cdf[states]).sum(axis=1), P.shape[0] - 1)


def _sample_nonepisodic(env: EnvironmentSpec, rng, size):
    if size is None or int(size) < 1:
        raise BadDims("non-episodic sampling needs a positive number of transitions")
    n = int(size)
    pi_cdf = np.cumsum(env.stationary_dist)
    pi_cdf[-1] = 1.0
    s = np.searchsorted(pi_cdf, rng.random(n), side="right")
    s = np.minimum(s, env.n_states - 1)
    s_next = _next_states(rng, env.transition, s)
    rewards = draw_rewards(rng, env.reward_mean[s, s_next], _transition_noise(env, s, s_next), env.r_max)
    return NonEpisodicHistory(s, np.zeros(n, dtype=np.int64), rewards, s_next)


def _transition_noise(env, s, s_next) -> RewardNoise:
    amp = np.asarray(env.noise.amplitude, dtype=float)
    if amp.ndim == 2:
        return RewardNoise(env.noise.kind, amplitude=amp[s, s_next], scale=env.noise.scale)
    return env.noise


def sample_history(env: EnvironmentSpec, machine_seed: int, size=None):
    """One machine's offline data; deterministic in ``(env, machine_seed)``.

    ``size`` is ignored-or-checked for bandits (n is fixed by the contexts),
    the episodes per level-h state for episodic envs and the number of
    transitions for non-episodic envs.
    """
    return sample_history_rng(env, make_rng(machine_seed), size)


def sample_history_rng(env: EnvironmentSpec, rng: np.random.Generator, size=None):
    if env.kind is EnvKind.BANDIT:
        return _sample_bandit(env, rng, size)
    if env.kind is EnvKind.EPISODIC:
        return _sample_episodic(env, rng, size)
    return _sample_nonepisodic(env, rng, size)


def rollout_chain(env: EnvironmentSpec, start_states, steps: int, rng: np.random.Generator):
    """Run independent chains side by side; returns ``(states, rewards)`` of shape ``(chains, steps)``."""
    if env.kind is not EnvKind.NON_EPISODIC:
        raise ValueError("chain rollouts need a non-episodic environment")
    s = np.asarray(start_states, dtype=np.int64).copy()
    states = np.empty((s.size, steps), dtype=np.int64)
    rewards = np.empty((s.size, steps))
    for t in range(steps):
        nxt = _next_states(rng, env.transition, s)
        states[:, t] = s
        rewards[:, t] = draw_rewards(rng, env.reward_mean[s, nxt], _transition_noise(env, s, nxt), env.r_max)
        s = nxt
    return states, rewards


def discounted_returns(rewards: np.ndarray, gamma: float) -> np.ndarray:
    return rewards @ (gamma ** np.arange(rewards.shape[1]))


# ---------------------------------------------------------------------------
# text format

def history_to_text(history) -> str:
    buf = io.StringIO()
    if isinstance(history, BanditHistory):
        C = history.contexts.shape[2]
        buf.write("# bandit: arm,sample,reward," + ",".join(f"c{k}" for k in range(C)) + "\n")
        for a in range(history.n_arms):
            for l in range(history.samples_per_arm):
                ctx = ",".join(repr(float(x)) for x in history.contexts[a, l])
                buf.write(f"{a},{l},{float(history.rewards[a, l])!r},{ctx}\n")
    elif isinstance(history, EpisodicHistory):
        buf.write("# episodic: episode,step,state,action,reward\n")
        for l, ep in enumerate(history.episodes()):
            for t, (s, a, r) in enumerate(ep):
                buf.write(f"{l},{t},{s},{a},{float(r)!r}\n")
    elif isinstance(history, NonEpisodicHistory):
        buf.write("# nonepisodic: t,state,action,reward,next_state\n")
        for t in range(len(history)):
            buf.write(
                f"{t},{history.states[t]},{history.actions[t]},{float(history.rewards[t])!r},{history.next_states[t]}\n"
            )
    else:
        raise TypeError(f"not a gameplay history: {type(history).__name__}")
    return buf.getvalue()


def history_from_text(text: str):
    lines = text.splitlines()
    header, rows = lines[0], [ln.split(",") for ln in lines[1:] if ln and not ln.startswith("#")]
    if header.startswith("# bandit"):
        A = max(int(r[0]) for r in rows) + 1
        n = max(int(r[1]) for r in rows) + 1
        C = len(rows[0]) - 3
        contexts, rewards = np.zeros((A, n, C)), np.zeros((A, n))
        for r in rows:
            a, l = int(r[0]), int(r[1])
            rewards[a, l] = float(r[2])
            contexts[a, l] = [float(x) for x in r[3:]]
        return BanditHistory(contexts, rewards)
    if header.startswith("# episodic"):
        episodes: dict[int, list] = {}
        for r in rows:
            episodes.setdefault(int(r[0]), []).append((int(r[2]), int(r[3]), float(r[4])))
        return EpisodicHistory.from_episodes([episodes[k] for k in sorted(episodes)])
    if header.startswith("# nonepisodic"):
        arr = np.array([[float(x) for x in r[1:]] for r in rows])
        return NonEpisodicHistory(arr[:, 0].astype(np.int64), arr[:, 1].astype(np.int64), arr[:, 2],
                                  arr[:, 3].astype(np.int64))
    raise ValueError("unrecognised history header")
