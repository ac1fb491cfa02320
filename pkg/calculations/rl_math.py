"""
Policy Optimization Math
Returns, TD errors, GAE advantages and clipped PPO losses over logged trajectories

Features:
- Discounted returns and rewards-to-go (scipy.signal.lfilter)
- Backward-recursion generalized advantage estimation
- Clipped surrogate actor objective, squared-error critic loss, total loss
- Batch scoring of trajectories with a shared normalizer
"""

import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import structlog
from scipy.signal import lfilter

from calculations.normalization import RewardNormalizer
from config.constants import EngineConstants
from utils.exceptions import ConfigurationError, NumericError, ShapeError

logger = structlog.get_logger(__name__)


@dataclass(frozen=True)
class RLConfig:
    gamma: float = 0.99
    lam: float = 0.95
    epsilon: float = 0.2
    critic_target: str = 'reward_to_go'

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0 or not 0.0 <= self.lam <= 1.0:
            raise ConfigurationError("gamma and lam must lie in [0, 1]")
        if self.epsilon <= 0.0:
            raise ConfigurationError("epsilon must be positive")
        if self.critic_target not in EngineConstants.CRITIC_TARGETS:
            raise ConfigurationError(f"Unknown critic target: {self.critic_target}")

    @classmethod
    def from_section(cls, section) -> 'RLConfig':
        return cls(gamma=section.gamma, lam=section.lam, epsilon=section.epsilon,
                   critic_target=section.critic_target)


@dataclass
class TrajectoryScores:
    rewards: List[float]
    values: List[float]
    action_log_probs: List[float]
    ref_log_probs: List[float]
    advantages: List[float] = field(default_factory=list)
    returns: List[float] = field(default_factory=list)

    def __post_init__(self):
        lengths = {len(self.rewards), len(self.values),
                   len(self.action_log_probs), len(self.ref_log_probs)}
        if len(lengths) != 1:
            raise ShapeError("Trajectory score lists differ in length",
                             details={'lengths': sorted(lengths)})


def _check_same_length(name_a: str, a: Sequence, name_b: str, b: Sequence) -> None:
    if len(a) != len(b):
        raise ShapeError(f"{name_a} and {name_b} differ in length ({len(a)} vs {len(b)})",
                         details={name_a: len(a), name_b: len(b)})


def reward_to_go(rewards: Sequence[float], gamma: float) -> np.ndarray:
    """Discounted rewards-to-go.

    Parameters
    ----------
    rewards : array_like
        Rewards of one complete trajectory.
    gamma : float
        Discount rate.

    Examples
    --------
    >>> reward_to_go([1, 1, 1], 0.5)
    array([1.75, 1.5 , 1.  ])
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    if rewards.size == 0:
        return rewards
    return lfilter([1.0], [1.0, -gamma], rewards[::-1])[::-1]


def discounted_return(rewards: Sequence[float], gamma: float) -> float:
    """Sum of gamma**t * r_t."""
    to_go = reward_to_go(rewards, gamma)
    return float(to_go[0]) if to_go.size else 0.0


def td_errors(rewards: Sequence[float], values: Sequence[float], gamma: float) -> np.ndarray:
    """delta_t = r_t + gamma * V(s_{t+1}) - V(s_t), with V = 0 past the last step."""
    _check_same_length('rewards', rewards, 'values', values)
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    next_values = np.append(values[1:], 0.0)
    return rewards + gamma * next_values - values


def gae(deltas: Sequence[float], gamma: float, lam: float) -> np.ndarray:
    """Generalized advantage estimates A_t = sum_l (gamma*lam)**l * delta_{t+l}."""
    deltas = np.asarray(deltas, dtype=np.float64)
    advantages = np.zeros_like(deltas)
    running = 0.0
    for t in reversed(range(len(deltas))):
        running = deltas[t] + gamma * lam * running
        advantages[t] = running
    return advantages


def ppo_actor_terms(action_lp: Sequence[float], ref_lp: Sequence[float],
                    advantages: Sequence[float], epsilon: float) -> np.ndarray:
    """Per-step min(r*A, clip(r, 1-eps, 1+eps)*A) with r = exp(action_lp - ref_lp)."""
    _check_same_length('action_log_probs', action_lp, 'ref_log_probs', ref_lp)
    _check_same_length('action_log_probs', action_lp, 'advantages', advantages)
    advantages = np.asarray(advantages, dtype=np.float64)
    with np.errstate(over='ignore', invalid='ignore'):
        ratios = np.exp(np.asarray(action_lp, dtype=np.float64) - np.asarray(ref_lp, dtype=np.float64))
    bad = np.flatnonzero(~np.isfinite(ratios))
    if bad.size:
        raise NumericError(f"Non-finite probability ratio at step {int(bad[0])}",
                           details={'step': int(bad[0])})
    unclipped = ratios * advantages
    clipped = np.clip(ratios, 1.0 - epsilon, 1.0 + epsilon) * advantages
    return np.minimum(unclipped, clipped)


def ppo_actor_objective(action_lp: Sequence[float], ref_lp: Sequence[float],
                        advantages: Sequence[float], epsilon: float) -> float:
    """Mean clipped surrogate; the training loss is its negation."""
    terms = ppo_actor_terms(action_lp, ref_lp, advantages, epsilon)
    return float(terms.mean()) if terms.size else 0.0


def critic_loss(values: Sequence[float], returns: Sequence[float]) -> float:
    _check_same_length('values', values, 'returns', returns)
    errors = np.asarray(values, dtype=np.float64) - np.asarray(returns, dtype=np.float64)
    return float(np.sum(errors ** 2))


def total_loss(actor_objective: float, critic: float) -> float:
    return -actor_objective + critic


def _floats(array: np.ndarray) -> List[float]:
    return [float(x) for x in array]


class TrajectoryScorer:
    """
    Scores a batch of trajectories in order.

    Step rewards (r_all) pass through one normalizer shared by the whole
    batch. Failed trajectories and trajectories with missing log-probs are
    reported as non-scorable.
    """

    def __init__(self, rl_config: RLConfig, normalization: str = 'none'):
        self.config = rl_config
        self.normalizer = RewardNormalizer(normalization)

    @staticmethod
    def unscorable_reason(trajectory) -> Optional[str]:
        if trajectory.status != 'completed':
            return f"episode {trajectory.status}"
        if not trajectory.steps:
            return 'no steps'
        for step in trajectory.steps:
            if step.action_log_prob is None or step.ref_log_prob is None:
                return f"missing log-prob at step {step.iteration}"
        return None

    def scores_for(self, trajectory) -> TrajectoryScores:
        rewards = self.normalizer.normalize_many(
            step.reward_breakdown.r_all for step in trajectory.steps
        )
        return TrajectoryScores(
            rewards=[float(r) for r in rewards],
            values=[float(s.value_estimate or 0.0) for s in trajectory.steps],
            action_log_probs=[float(s.action_log_prob) for s in trajectory.steps],
            ref_log_probs=[float(s.ref_log_prob) for s in trajectory.steps],
        )

    def score(self, trajectory) -> Dict[str, Any]:
        reason = self.unscorable_reason(trajectory)
        if reason is not None:
            logger.info('trajectory_unscorable', episode_id=trajectory.episode_id, reason=reason)
            return {'episode_id': trajectory.episode_id, 'scorable': False, 'reason': reason}

        cfg = self.config
        scores = self.scores_for(trajectory)
        deltas = td_errors(scores.rewards, scores.values, cfg.gamma)
        scores.advantages = _floats(gae(deltas, cfg.gamma, cfg.lam))
        if cfg.critic_target == 'reward_to_go':
            scores.returns = _floats(reward_to_go(scores.rewards, cfg.gamma))
        else:
            scores.returns = list(scores.rewards)

        actor = ppo_actor_objective(scores.action_log_probs, scores.ref_log_probs,
                                    scores.advantages, cfg.epsilon)
        critic = critic_loss(scores.values, scores.returns)
        total = total_loss(actor, critic)
        if not all(math.isfinite(x) for x in (actor, critic, total)):
            raise NumericError("Non-finite loss", details={'episode_id': trajectory.episode_id})
        return {
            'episode_id': trajectory.episode_id,
            'scorable': True,
            'rewards': scores.rewards,
            'advantages': scores.advantages,
            'returns': scores.returns,
            'actor_objective': actor,
            'critic_loss': critic,
            'total_loss': total
        }

    def score_batch(self, trajectories) -> List[Dict[str, Any]]:
        return [self.score(t) for t in trajectories]
