"""Tests for replay, restricted environments, trainers and seed retries."""

from __future__ import annotations

import math

import numpy as np
import pytest

from hybridrl import (
    AngularGrid,
    ConfigError,
    GaussianPolicy,
    QPolicy,
    Region,
    ReplayBuffer,
    RestrictedEnv,
    RetryExhaustedError,
    TerminationCause,
    TrainConfig,
    TrainingFailedError,
    train_dqn,
    train_ppo,
    train_with_retries,
)
from hybridrl.config import DqnConfig, PpoConfig
from hybridrl.dqn import huber_loss, td_targets
from hybridrl.envs import ObstacleEnv, UnitCircleEnv
from hybridrl.nn import Mlp
from hybridrl.policies import FeedbackPolicy
from hybridrl.ppo import clipped_surrogate_grad, compute_gae
from hybridrl.training import MetricsLog, evaluate, linear_schedule

from .conftest import circle_bang_bang


class TestReplayBuffer:
    """Tests for the replay ring buffer."""

    def test_wraps_around_capacity(self) -> None:
        buffer = ReplayBuffer(3, 2, np.random.default_rng(0))
        for k in range(5):
            buffer.add(np.array([k, k]), k, float(k), np.array([k + 1, k + 1]), k == 4)

        assert len(buffer) == 3
        assert sorted(buffer.rewards.tolist()) == [2.0, 3.0, 4.0]

    def test_sample_shapes(self) -> None:
        buffer = ReplayBuffer(10, 2, np.random.default_rng(0))
        buffer.add(np.zeros(2), 1, -1.0, np.ones(2), False)

        observations, actions, rewards, next_observations, terminals = buffer.sample(4)

        assert observations.shape == (4, 2)
        assert actions.tolist() == [1, 1, 1, 1]
        assert next_observations.shape == (4, 2)
        assert rewards.shape == terminals.shape == (4,)

    def test_empty_buffer_cannot_sample(self) -> None:
        with pytest.raises(ValueError):
            ReplayBuffer(4, 2, np.random.default_rng(0)).sample(1)


def test_linear_schedule() -> None:
    assert linear_schedule(1.0, 0.0, 10, 0) == 1.0
    assert linear_schedule(1.0, 0.0, 10, 5) == pytest.approx(0.5)
    assert linear_schedule(1.0, 0.0, 10, 50) == 0.0
    assert linear_schedule(1.0, 0.2, 0, 3) == 0.2


def test_td_targets_cut_at_terminals() -> None:
    targets = td_targets(
        np.array([1.0, 1.0]), np.array([[0.0, 2.0], [5.0, 3.0]]), np.array([0.0, 1.0]), 0.5
    )

    np.testing.assert_allclose(targets, [2.0, 1.0])


def test_huber_loss() -> None:
    assert huber_loss(np.array([0.5, -2.0])) == pytest.approx((0.125 + 1.5) / 2.0)


def test_gae_without_discounting_sums_rewards() -> None:
    rewards = np.array([1.0, 2.0, 3.0])
    values = np.array([0.5, 0.5, 0.5])

    advantages, returns = compute_gae(rewards, values, np.zeros(3), 1.0, 1.0, 1.0)

    np.testing.assert_allclose(returns, [7.0, 6.0, 4.0])
    np.testing.assert_allclose(advantages, returns - values)


def test_gae_stops_at_episode_end() -> None:
    advantages, _ = compute_gae(
        np.array([1.0, 1.0]), np.zeros(2), np.array([1.0, 0.0]), 10.0, 1.0, 1.0
    )

    np.testing.assert_allclose(advantages, [1.0, 11.0])


def test_clipped_surrogate_gradient_matches_finite_differences() -> None:
    rng = np.random.default_rng(2)
    log_probs = rng.normal(scale=0.02, size=8)
    old = np.zeros(8)
    advantages = rng.normal(size=8)

    def loss(values: np.ndarray) -> float:
        return clipped_surrogate_grad(np.exp(values - old), advantages, 0.2)[0]

    _, grad, fraction = clipped_surrogate_grad(np.exp(log_probs - old), advantages, 0.2)

    eps = 1e-7
    for index in range(8):
        bump = np.zeros(8)
        bump[index] = eps
        numeric = (loss(log_probs + bump) - loss(log_probs - bump)) / (2.0 * eps)
        assert numeric == pytest.approx(grad[index], abs=1e-6)
    assert fraction == 0.0


class TestRestrictedEnv:
    """Tests for region-restricted training environments."""

    def test_leaving_region_terminates_with_penalty(self, circle: UnitCircleEnv) -> None:
        grid = AngularGrid(126)
        region = Region(grid, grid.center_angles() < math.pi, "M0")
        env = RestrictedEnv(circle, region, exit_penalty=10.0)

        result = env.step(circle.state_at(math.pi - 0.05), 1.0)

        assert result.termination_cause is TerminationCause.LEFT_DOMAIN
        assert result.reward == pytest.approx(circle.reward(result.next_state) - 10.0)

    def test_default_exit_penalty_exceeds_any_discounted_path_cost(
        self, circle: UnitCircleEnv
    ) -> None:
        grid = AngularGrid(126)
        region = Region(grid, grid.center_angles() < math.pi, "M0")
        cfg = TrainConfig()
        env = RestrictedEnv(circle, region, cfg.exit_penalty)

        result = env.step(circle.state_at(math.pi - 0.05), 1.0)

        # Circle rewards never drop below -1 per step.
        assert -result.reward > 1.0 / (1.0 - cfg.gamma)

    def test_reaching_inside_region_still_counts(self, circle: UnitCircleEnv) -> None:
        grid = AngularGrid(126)
        region = Region(grid, grid.center_angles() < math.pi, "M0")
        env = RestrictedEnv(circle, region)

        result = env.step(circle.state_at(0.15), -1.0)

        assert result.termination_cause is TerminationCause.REACHED_SETPOINT

    def test_initial_states_come_from_region(self, circle: UnitCircleEnv) -> None:
        grid = AngularGrid(126)
        region = Region(grid, grid.center_angles() > math.pi, "M1")
        env = RestrictedEnv(circle, region)
        rng = np.random.default_rng(0)

        samples = np.array([env.sample_initial_state(rng) for _ in range(50)])

        assert region.contains_many(samples).all()
        assert region.contains_many(env.evaluation_states()).all()


def test_evaluate_counts_reached_states(circle: UnitCircleEnv) -> None:
    result = evaluate(FeedbackPolicy(circle_bang_bang), circle)

    assert result.success_rate == 1.0
    assert result.reached.shape == (20,)


def _tiny_dqn() -> TrainConfig:
    return TrainConfig(
        algorithm="dqn",
        total_steps=300,
        batch_size=16,
        hidden=(8,),
        eval_threshold=0.0,
        log_interval=100,
        dqn=DqnConfig(buffer_size=500, learning_starts=20, target_sync=50),
    )


def _tiny_ppo() -> TrainConfig:
    return TrainConfig(
        total_steps=128,
        batch_size=32,
        hidden=(8,),
        eval_threshold=0.0,
        ppo=PpoConfig(n_steps=64, n_epochs=2),
    )


def test_dqn_smoke(obstacle: ObstacleEnv) -> None:
    metrics = MetricsLog()

    policy = train_dqn(obstacle, _tiny_dqn(), metrics=metrics)

    assert isinstance(policy, QPolicy)
    assert [row["step"] for row in metrics.rows] == [100, 200, 300]
    assert policy.act([0.0, 0.0]) in obstacle.discrete_actions


def test_dqn_is_reproducible(obstacle: ObstacleEnv) -> None:
    first = train_dqn(obstacle, _tiny_dqn())
    second = train_dqn(obstacle, _tiny_dqn())

    for a, b in zip(first.q_net.params, second.q_net.params):
        np.testing.assert_array_equal(a, b)


def test_dqn_needs_discrete_actions(circle: UnitCircleEnv) -> None:
    with pytest.raises(ConfigError):
        train_dqn(circle, _tiny_dqn())


def test_ppo_smoke(circle: UnitCircleEnv) -> None:
    metrics = MetricsLog()

    policy = train_ppo(circle, _tiny_ppo(), metrics=metrics)

    assert isinstance(policy, GaussianPolicy)
    assert policy.value_net is not None
    assert [row["step"] for row in metrics.rows] == [64, 128]
    assert -1.0 <= policy.act([0.0, 1.0]) <= 1.0


def test_ppo_warm_start_keeps_architecture(circle: UnitCircleEnv) -> None:
    base = train_ppo(circle, _tiny_ppo())

    tuned = train_ppo(circle, _tiny_ppo(), warm_start=base, total_steps=64)

    assert tuned.mean_net.layer_dims == base.mean_net.layer_dims
    assert tuned.mean_net is not base.mean_net


def test_ppo_warm_start_restores_exploration(circle: UnitCircleEnv) -> None:
    annealed = GaussianPolicy(Mlp.zeros([2, 1]), [-3.0])

    tuned = train_ppo(circle, _tiny_ppo(), warm_start=annealed, total_steps=64)

    assert tuned.log_std[0] == pytest.approx(0.0, abs=0.05)
    assert annealed.log_std[0] == -3.0


def test_ppo_needs_continuous_actions(obstacle: ObstacleEnv) -> None:
    with pytest.raises(ConfigError):
        train_ppo(obstacle, _tiny_ppo())


def test_training_fails_below_evaluation_bar(circle: UnitCircleEnv) -> None:
    cfg = _tiny_ppo().with_overrides(total_steps=64, eval_threshold=1.0)

    with pytest.raises(TrainingFailedError) as exc_info:
        train_ppo(circle, cfg)

    assert exc_info.value.threshold == 1.0
    assert exc_info.value.seed == 0


class TestRetries:
    """Tests for seed retries of training stages."""

    def test_retries_with_next_seed(
        self, monkeypatch: pytest.MonkeyPatch, circle: UnitCircleEnv
    ) -> None:
        seeds: list[int] = []
        trained = FeedbackPolicy(circle_bang_bang)

        def fake_train(env: object, cfg: TrainConfig, **kwargs: object) -> FeedbackPolicy:
            seeds.append(cfg.seed)
            if len(seeds) == 1:
                raise TrainingFailedError("miss", success_rate=0.5, threshold=0.9)
            return trained

        monkeypatch.setattr("hybridrl.agents.train_policy", fake_train)

        policy, seed = train_with_retries(circle, TrainConfig(seed=10))

        assert policy is trained
        assert seed == 11
        assert seeds == [10, 11]

    def test_exhausted_after_max_attempts(
        self, monkeypatch: pytest.MonkeyPatch, circle: UnitCircleEnv
    ) -> None:
        logged: list[int] = []

        def fake_train(env: object, cfg: TrainConfig, **kwargs: object) -> FeedbackPolicy:
            raise TrainingFailedError("miss", success_rate=0.1, threshold=0.9, seed=cfg.seed)

        monkeypatch.setattr("hybridrl.agents.train_policy", fake_train)

        with pytest.raises(RetryExhaustedError) as exc_info:
            train_with_retries(
                circle, TrainConfig(seed=0), on_metrics=lambda seed, _log: logged.append(seed)
            )

        assert exc_info.value.attempts == 3
        assert isinstance(exc_info.value.last_error, TrainingFailedError)
        assert logged == [0, 1, 2]
