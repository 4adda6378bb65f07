"""Clipped-surrogate policy optimization with a Gaussian actor and GAE."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .config import TrainConfig
from .envs import ControlEnv, TerminationCause
from .exceptions import ConfigError
from .models import FloatArray
from .nn import Adam, Mlp, clip_by_global_norm
from .policies import GaussianPolicy, gaussian_log_prob
from .training import EpisodeTracker, MetricsLog, check_evaluation

logger = logging.getLogger(__name__)

_ENTROPY_CONST = 0.5 * math.log(2.0 * math.pi * math.e)


@dataclass(slots=True)
class RolloutBuffer:
    """On-policy transitions of one collection phase."""

    observations: FloatArray
    actions: FloatArray
    log_probs: FloatArray
    values: FloatArray
    rewards: FloatArray
    dones: FloatArray
    last_value: float


def compute_gae(
    rewards: FloatArray,
    values: FloatArray,
    dones: FloatArray,
    last_value: float,
    gamma: float,
    gae_lambda: float,
) -> tuple[FloatArray, FloatArray]:
    """Generalized advantage estimates and value targets.

    ``dones[t]`` marks that the episode ended after step ``t``; truncated episodes must have
    their bootstrap value already folded into ``rewards[t]``.
    """
    advantages = np.zeros_like(rewards)
    running = 0.0
    for t in range(rewards.size - 1, -1, -1):
        next_value = last_value if t == rewards.size - 1 else values[t + 1]
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        running = delta + gamma * gae_lambda * nonterminal * running
        advantages[t] = running
    return advantages, advantages + values


def clipped_surrogate_grad(
    ratios: FloatArray, advantages: FloatArray, clip_range: float
) -> tuple[float, FloatArray, float]:
    """Loss ``-mean(min(r A, clip(r) A))``, its gradient w.r.t. the log-probabilities,
    and the clip fraction."""

    clipped = np.clip(ratios, 1.0 - clip_range, 1.0 + clip_range)
    loss = -float(np.mean(np.minimum(ratios * advantages, clipped * advantages)))
    active = ((advantages >= 0) & (ratios <= 1.0 + clip_range)) | (
        (advantages < 0) & (ratios >= 1.0 - clip_range)
    )
    grad = np.where(active, -advantages * ratios, 0.0) / ratios.size
    fraction = float(np.mean(np.abs(ratios - 1.0) > clip_range))
    return loss, grad, fraction


class _Learner:
    def __init__(self, policy: GaussianPolicy, value_net: Mlp, cfg: TrainConfig) -> None:
        self.policy = policy
        self.value_net = value_net
        self.cfg = cfg
        actor_params = policy.mean_net.params
        self.n_actor = len(actor_params)
        self.optimizer = Adam(
            [*actor_params, policy.log_std, *value_net.params], cfg.learning_rate
        )

    def value(self, observation: FloatArray) -> float:
        return float(self.value_net.forward(observation)[0])

    def update(
        self,
        observations: FloatArray,
        actions: FloatArray,
        old_log_probs: FloatArray,
        advantages: FloatArray,
        returns: FloatArray,
    ) -> tuple[float, float, float, float]:
        ppo = self.cfg.ppo
        if advantages.size > 1:
            advantages = (advantages - advantages.mean()) / (advantages.std() + 1e-8)
        means, actor_trace = self.policy.mean_net.forward_trace(observations)
        log_std = self.policy.log_std
        std = np.exp(log_std)
        new_log_probs = gaussian_log_prob(actions, means, log_std)
        ratios = np.exp(new_log_probs - old_log_probs)
        policy_loss, dlogp, clip_fraction = clipped_surrogate_grad(
            ratios, advantages, ppo.clip_range
        )

        z = (actions - means) / std
        grad_means = dlogp[:, None] * z / std
        grad_log_std = np.sum(dlogp[:, None] * (z * z - 1.0), axis=0)
        entropy = float(np.sum(log_std) + _ENTROPY_CONST * log_std.size)
        grad_log_std = grad_log_std - ppo.ent_coef

        values, value_trace = self.value_net.forward_trace(observations)
        errors = values[:, 0] - returns
        value_loss = float(np.mean(errors**2))
        grad_values = (ppo.vf_coef * 2.0 * errors / errors.size)[:, None]

        grads = [
            *self.policy.mean_net.backward(grad_means, actor_trace),
            grad_log_std,
            *self.value_net.backward(grad_values, value_trace),
        ]
        self.optimizer.step(clip_by_global_norm(grads, ppo.max_grad_norm))
        loss = policy_loss + ppo.vf_coef * value_loss - ppo.ent_coef * entropy
        return loss, value_loss, entropy, clip_fraction


def _collect(
    env: ControlEnv,
    learner: _Learner,
    rng: np.random.Generator,
    state: FloatArray,
    episode_steps: int,
    n_steps: int,
    gamma: float,
    tracker: EpisodeTracker,
) -> tuple[RolloutBuffer, FloatArray, int]:
    observations = np.zeros((n_steps, 2))
    actions = np.zeros((n_steps, learner.policy.mean_net.output_dim))
    log_probs = np.zeros(n_steps)
    values = np.zeros(n_steps)
    rewards = np.zeros(n_steps)
    dones = np.zeros(n_steps)
    low, high = learner.policy.action_bounds
    for t in range(n_steps):
        action, log_prob = learner.policy.sample(state, rng)
        observations[t] = state
        actions[t] = action
        log_probs[t] = log_prob
        values[t] = learner.value(state)
        result = env.step(state, float(np.clip(action[0], low, high)), elapsed_steps=episode_steps)
        reward = result.reward
        tracker.add(reward, result.terminated)
        if result.termination_cause is TerminationCause.HORIZON:
            reward += gamma * learner.value(result.next_state)
        rewards[t] = reward
        dones[t] = float(result.terminated)
        if result.terminated:
            state = env.sample_initial_state(rng)
            episode_steps = 0
        else:
            state = result.next_state
            episode_steps += 1
    last_value = learner.value(state)
    buffer = RolloutBuffer(observations, actions, log_probs, values, rewards, dones, last_value)
    return buffer, state, episode_steps


def train_ppo(
    env: ControlEnv,
    cfg: TrainConfig,
    *,
    warm_start: GaussianPolicy | None = None,
    metrics: MetricsLog | None = None,
    total_steps: int | None = None,
) -> GaussianPolicy:
    """Train a Gaussian actor with the clipped surrogate objective.

    Args:
        env: Environment with continuous actions (possibly restricted to a region)
        cfg: Training configuration; ``cfg.seed`` fixes every random choice
        warm_start: Policy (with critic) that initializes training
        metrics: Log receiving one row per update phase
        total_steps: Budget override (defaults to ``cfg.total_steps``)

    Returns:
        The trained policy; its deterministic action is the clamped mean

    Raises:
        ConfigError: If the environment has discrete actions
        TrainingFailedError: If the noise-free success rate is below ``cfg.eval_threshold``
        DivergenceError: If an update produced non-finite gradients
    """
    if env.discrete_actions is not None:
        raise ConfigError("PPO needs continuous actions", key="train.algorithm", value="ppo")
    budget = total_steps if total_steps is not None else cfg.total_steps
    ppo = cfg.ppo
    rng = np.random.default_rng(cfg.seed)
    dims = [2, *cfg.hidden, 1]
    if warm_start is not None:
        mean_net = warm_start.mean_net.copy()
        # Reopen exploration that the baseline may have annealed away.
        log_std = np.maximum(warm_start.log_std, ppo.log_std_init)
        value_net = (
            warm_start.value_net.copy()
            if warm_start.value_net is not None
            else Mlp(dims, rng=rng)
        )
    else:
        mean_net = Mlp(dims, rng=rng, output_scale=0.01)
        log_std = np.full(1, ppo.log_std_init)
        value_net = Mlp(dims, rng=rng)
    policy = GaussianPolicy(mean_net, log_std, env.action_bounds, value_net=value_net)
    learner = _Learner(policy, value_net, cfg)
    tracker = EpisodeTracker()

    logger.info("Training PPO on %s for %d steps (seed %d)", env.name, budget, cfg.seed)
    state = env.sample_initial_state(rng)
    episode_steps = 0
    collected = 0
    while collected < budget:
        n_steps = min(ppo.n_steps, budget - collected)
        buffer, state, episode_steps = _collect(
            env, learner, rng, state, episode_steps, n_steps, cfg.gamma, tracker
        )
        collected += n_steps
        advantages, returns = compute_gae(
            buffer.rewards,
            buffer.values,
            buffer.dones,
            buffer.last_value,
            cfg.gamma,
            ppo.gae_lambda,
        )
        stats: list[tuple[float, float, float, float]] = []
        batch = min(cfg.batch_size, n_steps)
        for _ in range(ppo.n_epochs):
            order = rng.permutation(n_steps)
            for start in range(0, n_steps, batch):
                index = order[start : start + batch]
                stats.append(
                    learner.update(
                        buffer.observations[index],
                        buffer.actions[index],
                        buffer.log_probs[index],
                        advantages[index],
                        returns[index],
                    )
                )
        loss, value_loss, entropy, clip_fraction = (float(v) for v in np.mean(stats, axis=0))
        logger.debug(
            "step=%d mean_return=%.3f loss=%.4f clip_fraction=%.3f",
            collected,
            tracker.mean_return,
            loss,
            clip_fraction,
        )
        if metrics is not None:
            metrics.record(
                {
                    "step": collected,
                    "mean_return": tracker.mean_return,
                    "loss": loss,
                    "value_loss": value_loss,
                    "entropy": entropy,
                    "clip_fraction": clip_fraction,
                }
            )

    check_evaluation(policy, env, cfg.eval_threshold, total_steps=budget, seed=cfg.seed)
    return policy
