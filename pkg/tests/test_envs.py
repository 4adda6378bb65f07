"""Tests for the benchmark environments."""

from __future__ import annotations

import math

import numpy as np
import pytest

from hybridrl import ActionOutOfBoundsError, ConfigError, TerminationCause, make_env
from hybridrl.envs import (
    CRASHED,
    LEFT,
    NO_SIDE,
    REACHED,
    RUNNING,
    ObstacleEnv,
    UnitCircleEnv,
    wrap_signed,
)
from hybridrl.exceptions import DimensionMismatchError
from hybridrl.noise import NoiseModel
from hybridrl.regions import Region


class TestUnitCircle:
    """Tests for the unit-circle environment."""

    def test_euler_step_tracks_exact_rotation(self, circle: UnitCircleEnv) -> None:
        """Each step rotates by about u * dt and stays on the circle."""
        rng = np.random.default_rng(0)
        for _ in range(200):
            angle = rng.uniform(0.0, 2.0 * math.pi)
            u = rng.uniform(-1.0, 1.0)
            result = circle.step(circle.state_at(angle), u)
            exact = circle.state_at(angle + u * circle.dt)

            assert np.linalg.norm(result.next_state - exact) <= 1e-3
            assert np.linalg.norm(result.next_state) == pytest.approx(1.0)

    def test_reaching_the_setpoint_terminates(self, circle: UnitCircleEnv) -> None:
        result = circle.step(circle.state_at(0.15), -1.0)

        assert result.terminated
        assert result.termination_cause is TerminationCause.REACHED_SETPOINT

    def test_horizon_truncates(self, circle: UnitCircleEnv) -> None:
        result = circle.step(circle.state_at(2.0), 1.0, elapsed_steps=circle.horizon - 1)

        assert result.termination_cause is TerminationCause.HORIZON

    def test_reward_is_worst_at_pi(self, circle: UnitCircleEnv) -> None:
        assert circle.reward(circle.state_at(math.pi)) == pytest.approx(-1.0)
        assert circle.reward(circle.state_at(0.0)) == pytest.approx(0.0)
        assert circle.reward(circle.state_at(0.5)) == pytest.approx(
            circle.reward(circle.state_at(-0.5))
        )

    def test_action_bounds(self, circle: UnitCircleEnv) -> None:
        with pytest.raises(ActionOutOfBoundsError) as exc_info:
            circle.step(circle.state_at(1.0), 1.5)

        assert exc_info.value.action == 1.5
        assert exc_info.value.allowed == (-1.0, 1.0)

    def test_wrong_state_dimension(self, circle: UnitCircleEnv) -> None:
        with pytest.raises(DimensionMismatchError):
            circle.step([1.0, 0.0, 0.0], 0.0)

    def test_separation_by_travel_direction(self, circle: UnitCircleEnv) -> None:
        clockwise = np.array([circle.state_at(2.0 - 0.1 * k) for k in range(5)])
        counter = np.array([circle.state_at(2.0 + 0.1 * k) for k in range(5)])
        history = np.stack([clockwise, counter], axis=1)

        sides = circle.separation(history, np.array([RUNNING, RUNNING]))

        assert sides.tolist() == [0, 1]

    def test_separation_undecided_inside_tolerance(self, circle: UnitCircleEnv) -> None:
        history = np.stack([circle.state_at(0.01)] * 3)[:, None, :]

        assert circle.separation(history, np.array([REACHED])).tolist() == [NO_SIDE]

    def test_adversarial_observation_is_bounded(self, circle: UnitCircleEnv) -> None:
        stream = NoiseModel(0.1).stream(50)
        for k in range(50):
            state = circle.state_at(math.pi + 0.3 * math.sin(k))
            observed = circle.observe(state, stream)
            shift = wrap_signed(circle.angles(observed) - circle.angles(state))

            assert abs(float(shift)) <= 0.1 + 1e-12

    def test_adversarial_noise_crosses_the_critical_angle(self, circle: UnitCircleEnv) -> None:
        stream = NoiseModel(0.1).stream(2)

        first = circle.observe(circle.state_at(math.pi), stream)
        second = circle.observe(circle.state_at(math.pi + 0.05), stream)

        assert first[1] < 0.0
        assert second[1] > 0.0

    def test_aimed_noise_attacks_the_given_center(self, circle: UnitCircleEnv) -> None:
        stream = NoiseModel(0.1).aimed_at(3.0).stream(2)

        first = circle.observe(circle.state_at(3.03), stream)
        second = circle.observe(circle.state_at(3.5), stream)

        assert float(circle.angles(first)) == pytest.approx(2.97)
        assert float(circle.angles(second)) == pytest.approx(3.5)

    def test_critical_center_is_the_circular_mean(self, circle: UnitCircleEnv) -> None:
        grid = circle.make_grid(0.05)

        center = circle.critical_center(Region.from_cells(grid, [60, 61]))
        wrapped = circle.critical_center(Region.from_cells(grid, [125, 0]))

        assert center == pytest.approx(61 * grid.resolution)
        assert float(wrap_signed(wrapped)) == pytest.approx(0.0, abs=1e-9)

    def test_grid_and_sides(self, circle: UnitCircleEnv) -> None:
        grid = circle.make_grid(0.05)

        assert grid.n_cells == 126
        sides = circle.side_of(grid.centers())
        assert sides[:63].tolist() == [0] * 63
        assert sides[63:].tolist() == [1] * 63

    def test_transverse_gap_wraps(self, circle: UnitCircleEnv) -> None:
        gap = circle.transverse_gap(circle.state_at(0.1), circle.state_at(2.0 * math.pi - 0.1))

        assert gap == pytest.approx(0.2)


class TestObstacle:
    """Tests for the obstacle-avoidance environment."""

    def test_moves_right_at_unit_speed(self, obstacle: ObstacleEnv) -> None:
        result = obstacle.step([0.0, 0.0], 0.5)

        np.testing.assert_allclose(result.next_state, [0.1, 0.05])
        assert not result.terminated

    def test_only_table_actions_are_admissible(self, obstacle: ObstacleEnv) -> None:
        with pytest.raises(ActionOutOfBoundsError):
            obstacle.step([0.0, 0.0], 0.25)

    def test_termination_codes(self, obstacle: ObstacleEnv) -> None:
        states = np.array([[1.0, 0.0], [3.0, 0.05], [3.2, 0.0], [0.5, 0.5]])

        codes = obstacle.termination_codes(states)

        assert codes.tolist() == [CRASHED, REACHED, LEFT, RUNNING]

    def test_crash_terminates_episode(self, obstacle: ObstacleEnv) -> None:
        result = obstacle.step([0.75, 0.0], 0.0)

        assert result.termination_cause is TerminationCause.CRASHED
        assert result.reward < -10.0

    def test_lateral_position_is_clipped(self, obstacle: ObstacleEnv) -> None:
        result = obstacle.step([0.2, 1.45], 1.0)

        assert result.next_state[1] == pytest.approx(1.5)

    def test_reward_is_symmetric(self, obstacle: ObstacleEnv) -> None:
        assert obstacle.reward([0.5, 0.4]) == pytest.approx(obstacle.reward([0.5, -0.4]))

    def test_separation_by_passing_side(self, obstacle: ObstacleEnv) -> None:
        xs = np.linspace(0.0, 1.6, 17)
        above = np.stack([xs, np.full_like(xs, 0.4)], axis=1)
        below = np.stack([xs, np.full_like(xs, -0.4)], axis=1)
        history = np.stack([above, below], axis=1)

        sides = obstacle.separation(history, np.array([RUNNING, RUNNING]))

        assert sides.tolist() == [0, 1]

    def test_crashed_runs_have_no_side(self, obstacle: ObstacleEnv) -> None:
        xs = np.linspace(0.0, 0.9, 10)
        history = np.stack([xs, np.zeros_like(xs)], axis=1)[:, None, :]

        assert obstacle.separation(history, np.array([CRASHED])).tolist() == [NO_SIDE]

    def test_noise_only_upstream(self, obstacle: ObstacleEnv) -> None:
        stream = NoiseModel(0.1).stream(2)

        upstream = obstacle.observe(np.array([0.5, 0.0]), stream)
        downstream = obstacle.observe(np.array([1.5, 0.0]), stream)

        assert upstream[1] == pytest.approx(0.1)
        assert downstream[1] == 0.0

    def test_aimed_noise_is_measured_from_the_center(self, obstacle: ObstacleEnv) -> None:
        assert obstacle.boundary_offset(np.array([0.5, 0.3]), 0.1) == pytest.approx(0.2)
        assert obstacle.boundary_offset(np.array([0.5, 0.3])) == pytest.approx(0.3)
        assert obstacle.boundary_offset(np.array([1.5, 0.3]), 0.1) == math.inf

    def test_critical_center_is_the_upstream_median(self, obstacle: ObstacleEnv) -> None:
        grid = obstacle.make_grid(0.05)
        band = Region.from_predicate(
            grid, lambda c: (np.abs(c[:, 1] - 0.1) < 0.03) & (c[:, 0] < 0.5)
        )
        downstream = Region.from_predicate(grid, lambda c: (c[:, 0] > 2.0) & (c[:, 1] < -1.0))

        assert obstacle.critical_center(band.union(downstream)) == pytest.approx(0.1)
        assert obstacle.critical_center(downstream) == 0.0


def test_make_env_unknown_name() -> None:
    with pytest.raises(ConfigError):
        make_env("cartpole")


def test_make_env_defaults() -> None:
    assert make_env("obstacle").horizon == 60
    assert make_env("unit-circle").horizon == 200
