"""Deep Q-learning with uniform replay and a target network."""

from __future__ import annotations

import logging

import numpy as np

from .config import TrainConfig
from .envs import ControlEnv, TerminationCause
from .exceptions import ConfigError
from .models import FloatArray
from .nn import Adam, Mlp, clip_by_global_norm
from .policies import QPolicy
from .training import (
    EpisodeTracker,
    MetricsLog,
    ReplayBuffer,
    check_evaluation,
    linear_schedule,
)

logger = logging.getLogger(__name__)


def td_targets(
    rewards: FloatArray, next_q: FloatArray, terminals: FloatArray, gamma: float
) -> FloatArray:
    """One-step targets ``r + gamma * (1 - terminal) * max_a Q_target(s', a)``."""

    return rewards + gamma * (1.0 - terminals) * next_q.max(axis=1)  # type: ignore[no-any-return]


def huber_grad(errors: FloatArray) -> FloatArray:
    return np.clip(errors, -1.0, 1.0)  # type: ignore[no-any-return]


def huber_loss(errors: FloatArray) -> float:
    absolute = np.abs(errors)
    return float(np.mean(np.where(absolute <= 1.0, 0.5 * errors**2, absolute - 0.5)))


def _update(
    q_net: Mlp,
    target_net: Mlp,
    optimizer: Adam,
    buffer: ReplayBuffer,
    cfg: TrainConfig,
) -> float:
    observations, actions, rewards, next_observations, terminals = buffer.sample(cfg.batch_size)
    targets = td_targets(rewards, target_net.forward(next_observations), terminals, cfg.gamma)
    q_values, trace = q_net.forward_trace(observations)
    rows = np.arange(actions.size)
    errors = q_values[rows, actions] - targets
    grad_output = np.zeros_like(q_values)
    grad_output[rows, actions] = huber_grad(errors) / actions.size
    grads = clip_by_global_norm(q_net.backward(grad_output, trace), cfg.dqn.max_grad_norm)
    optimizer.step(grads)
    return huber_loss(errors)


def train_dqn(
    env: ControlEnv,
    cfg: TrainConfig,
    *,
    warm_start: QPolicy | None = None,
    metrics: MetricsLog | None = None,
    total_steps: int | None = None,
) -> QPolicy:
    """Train a greedy Q-policy and check it against the evaluation bar.

    Args:
        env: Environment with a discrete action table (possibly restricted to a region)
        cfg: Training configuration; ``cfg.seed`` fixes every random choice
        warm_start: Policy whose Q-network initializes training
        metrics: Log receiving one row every ``cfg.log_interval`` steps
        total_steps: Budget override (defaults to ``cfg.total_steps``)

    Returns:
        The trained policy

    Raises:
        ConfigError: If the environment has continuous actions
        TrainingFailedError: If the noise-free success rate is below ``cfg.eval_threshold``
        DivergenceError: If an update produced non-finite gradients
    """
    if env.discrete_actions is None:
        raise ConfigError("DQN needs a discrete action set", key="train.algorithm", value="dqn")
    budget = total_steps if total_steps is not None else cfg.total_steps
    rng = np.random.default_rng(cfg.seed)
    table = np.asarray(env.discrete_actions)
    dims = [2, *cfg.hidden, table.size]
    if warm_start is not None:
        q_net = warm_start.q_net.copy()
        epsilon_start = cfg.dqn.finetune_epsilon_start
    else:
        q_net = Mlp(dims, rng=rng)
        epsilon_start = cfg.dqn.epsilon_start
    target_net = q_net.copy()
    optimizer = Adam(q_net.params, cfg.learning_rate)
    buffer = ReplayBuffer(cfg.dqn.buffer_size, 2, rng)
    tracker = EpisodeTracker()
    decay_steps = int(cfg.dqn.epsilon_fraction * budget)
    learning_starts = 0 if warm_start is not None else cfg.dqn.learning_starts
    loss = float("nan")

    logger.info("Training DQN on %s for %d steps (seed %d)", env.name, budget, cfg.seed)
    state = env.sample_initial_state(rng)
    episode_steps = 0
    for step in range(budget):
        epsilon = linear_schedule(epsilon_start, cfg.dqn.epsilon_end, decay_steps, step)
        if rng.random() < epsilon:
            index = int(rng.integers(0, table.size))
        else:
            index = int(np.argmax(q_net.forward(state)))
        result = env.step(state, float(table[index]), elapsed_steps=episode_steps)
        terminal = result.terminated and result.termination_cause is not TerminationCause.HORIZON
        buffer.add(state, index, result.reward, result.next_state, terminal)
        tracker.add(result.reward, result.terminated)
        if result.terminated:
            state = env.sample_initial_state(rng)
            episode_steps = 0
        else:
            state = result.next_state
            episode_steps += 1

        if step >= learning_starts and step % cfg.dqn.train_freq == 0 and len(buffer) > 0:
            loss = _update(q_net, target_net, optimizer, buffer, cfg)
        if step % cfg.dqn.target_sync == 0:
            target_net.load_from(q_net)
        if (step + 1) % cfg.log_interval == 0:
            logger.debug(
                "step=%d mean_return=%.3f loss=%.4f epsilon=%.3f",
                step + 1,
                tracker.mean_return,
                loss,
                epsilon,
            )
            if metrics is not None:
                metrics.record(
                    {
                        "step": step + 1,
                        "mean_return": tracker.mean_return,
                        "loss": loss,
                        "epsilon": epsilon,
                    }
                )

    policy = QPolicy(q_net, table)
    check_evaluation(policy, env, cfg.eval_threshold, total_steps=budget, seed=cfg.seed)
    return policy
