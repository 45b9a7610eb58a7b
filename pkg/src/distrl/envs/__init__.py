"""Data-generating processes and offline histories."""

from .constructors import (
    CONSTRUCTORS,
    adversarial_td_bias_env,
    env_from_dict,
    generic_bandit,
    generic_episodic,
    generic_nonepisodic,
    hard_bandit,
    hard_episodic,
    hard_nonepisodic,
    jump_rewards,
    max_adversarial_norm,
    random_signs,
    stationary_distribution,
    stay_jump_kernel,
    stay_reward_mean,
)
from .features import make_orthogonal_features
from .history import (
    UNTRACKED_STATE,
    BanditHistory,
    EpisodicHistory,
    NonEpisodicHistory,
    discounted_returns,
    history_from_text,
    history_to_text,
    rollout_chain,
    sample_history,
    sample_history_rng,
)
from .spec import EnvironmentSpec, EnvKind, NoiseKind, RewardNoise
from .validate import check_assumptions

__all__ = [name for name in dir() if not name.startswith("_")]
