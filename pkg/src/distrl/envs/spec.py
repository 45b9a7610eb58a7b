from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..linalg import FeatureMatrix


class EnvKind(str, enum.Enum):
    BANDIT = "ContextualBandit"
    EPISODIC = "EpisodicMDP"
    NON_EPISODIC = "NonEpisodicMDP"


class NoiseKind(str, enum.Enum):
    NONE = "none"
    TWO_POINT = "two_point"  # +-amplitude with the mean set by a Bernoulli bias
    UNIFORM = "uniform"
    GAUSSIAN = "gaussian"  # symmetric truncation keeps the mean
    GOOD_BAD = "good_bad"  # episodic: one coin decides the sign of every step


@dataclass(frozen=True)
class RewardNoise:
    """How a reward is drawn around its mean.

    ``amplitude`` is the two-point magnitude (scalar, or an array matching
    the mean layout; 0 means deterministic). ``scale`` is the fraction of the
    remaining headroom ``r_max - |mean|`` used by uniform/gaussian noise.
    """

    kind: NoiseKind
    amplitude: Any = 0.0
    scale: float = 0.0


def _freeze(a):
    if a is None:
        return None
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class EnvironmentSpec:
    """A data-generating process together with its true parameter.

    ``reward_mean`` layout depends on ``kind``: bandit ``(A, n)`` per arm and
    sample; episodic ``(S_h,)`` expected return from each level-h state;
    non-episodic ``(S, S)`` mean reward of each transition.
    """

    kind: EnvKind
    name: str
    params: dict
    true_theta: np.ndarray
    features: FeatureMatrix
    r_max: float
    lambda_min: float
    reward_mean: np.ndarray
    noise: RewardNoise
    n_arms: int = 1
    horizon: int | None = None
    level: int | None = None
    episodes_per_state: int | None = None
    gamma: float | None = None
    jump_prob: float | None = None
    transition: np.ndarray | None = None
    stationary_dist: np.ndarray | None = None
    initial_theta: np.ndarray | None = None
    notes: tuple[str, ...] = field(default=())

    def __post_init__(self):
        for name in ("true_theta", "reward_mean", "transition", "stationary_dist", "initial_theta"):
            object.__setattr__(self, name, _freeze(getattr(self, name)))

    @property
    def dim(self) -> int:
        return self.true_theta.size

    @property
    def n_states(self) -> int:
        return self.features.rows

    @property
    def steps_after_level(self) -> int:
        return self.horizon - self.level

    @property
    def pi_min(self) -> float:
        return float(self.stationary_dist.min())

    @property
    def pi_max(self) -> float:
        return float(self.stationary_dist.max())

    def state_values(self) -> np.ndarray:
        return self.features.entries @ self.true_theta

    def to_dict(self) -> dict:
        return {"constructor": self.name, **self.params}
