"""Algorithm dispatch and seed retries for training stages."""

from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import replace

from .config import TrainConfig
from .dqn import train_dqn
from .envs import ControlEnv
from .exceptions import DivergenceError, RetryExhaustedError, TrainingFailedError
from .policies import GaussianPolicy, Policy, QPolicy
from .ppo import train_ppo
from .training import MetricsLog

logger = logging.getLogger(__name__)


def train_policy(
    env: ControlEnv,
    cfg: TrainConfig,
    *,
    warm_start: Policy | None = None,
    metrics: MetricsLog | None = None,
    total_steps: int | None = None,
) -> Policy:
    """Train with the algorithm named by ``cfg.algorithm``.

    Raises:
        TypeError: If ``warm_start`` does not match the algorithm
    """
    if cfg.algorithm == "dqn":
        if warm_start is not None and not isinstance(warm_start, QPolicy):
            raise TypeError("DQN can only be warm-started from a Q-policy")
        return train_dqn(
            env, cfg, warm_start=warm_start, metrics=metrics, total_steps=total_steps
        )
    if warm_start is not None and not isinstance(warm_start, GaussianPolicy):
        raise TypeError("PPO can only be warm-started from a Gaussian policy")
    return train_ppo(env, cfg, warm_start=warm_start, metrics=metrics, total_steps=total_steps)


def train_with_retries(
    env: ControlEnv,
    cfg: TrainConfig,
    *,
    warm_start: Policy | None = None,
    total_steps: int | None = None,
    on_metrics: Callable[[int, MetricsLog], None] | None = None,
) -> tuple[Policy, int]:
    """Train, retrying with the next seeds when the evaluation bar is missed.

    Args:
        env: Environment to train on
        cfg: Training configuration; ``cfg.retry`` bounds the attempts
        warm_start: Optional initial policy
        total_steps: Budget override
        on_metrics: Called with ``(seed, log)`` after every attempt

    Returns:
        The first successful policy and the seed that produced it

    Raises:
        RetryExhaustedError: When every attempt failed
    """
    retry = cfg.retry
    last_error: Exception | None = None
    for attempt in range(retry.max_attempts):
        seed = cfg.seed + attempt * retry.seed_stride
        if attempt > 0:
            logger.info(
                "Retrying training with seed %d (attempt %d/%d)",
                seed,
                attempt + 1,
                retry.max_attempts,
            )
        metrics = MetricsLog()
        try:
            policy = train_policy(
                env,
                replace(cfg, seed=seed),
                warm_start=warm_start,
                metrics=metrics,
                total_steps=total_steps,
            )
        except (TrainingFailedError, DivergenceError) as e:
            last_error = e
            logger.warning(
                "Training failed with seed %d (attempt %d/%d): %s",
                seed,
                attempt + 1,
                retry.max_attempts,
                str(e).splitlines()[0],
            )
            continue
        finally:
            if on_metrics is not None:
                on_metrics(seed, metrics)
        return policy, seed

    assert last_error is not None
    raise RetryExhaustedError(
        "Training failed for every seed",
        attempts=retry.max_attempts,
        last_error=last_error,
    )
