from __future__ import annotations

import math

import numpy as np
import pytest

from hybridrl import AngularGrid, GaussianPolicy, OutOfRegionError, QPolicy, Region
from hybridrl.nn import Mlp
from hybridrl.policies import (
    FeedbackPolicy,
    RestrictedPolicy,
    gaussian_log_prob,
    policy_to_payload,
    unwrap,
)

from .conftest import linear_gaussian

ACTIONS = (-1.0, -0.5, 0.0, 0.5, 1.0)


def test_greedy_action_is_exhaustive_argmax() -> None:
    policy = QPolicy(Mlp([2, 16, 5], seed=3), ACTIONS)
    observations = np.random.default_rng(0).uniform(-2.0, 2.0, size=(1000, 2))

    actions = policy.act_batch(observations)

    for observation, action in zip(observations, actions):
        q = policy.q_values(observation)
        best = max(range(len(ACTIONS)), key=lambda i: (q[i], -i))
        assert action == ACTIONS[best]


def test_greedy_ties_pick_lowest_index() -> None:
    policy = QPolicy(Mlp.zeros([2, 4, 5]), ACTIONS)

    assert policy.act([0.3, -0.2]) == -1.0


def test_q_network_must_match_action_table() -> None:
    with pytest.raises(ValueError):
        QPolicy(Mlp([2, 4, 3], seed=0), ACTIONS)


def test_gaussian_action_is_clamped_mean() -> None:
    policy = linear_gaussian(gain=100.0)

    assert policy.act([0.0, 0.5]) == -1.0
    assert policy.act([0.0, -0.5]) == 1.0
    assert policy.act([0.0, 0.004]) == pytest.approx(-0.4)


def test_gaussian_log_prob_matches_density() -> None:
    log_std = np.array([math.log(0.5)])

    value = gaussian_log_prob(np.array([[0.3]]), np.array([[0.1]]), log_std)[0]

    expected = -0.5 * (0.2 / 0.5) ** 2 - math.log(0.5) - 0.5 * math.log(2.0 * math.pi)
    assert value == pytest.approx(expected)


def test_gaussian_sample_is_seeded() -> None:
    policy = GaussianPolicy(Mlp([2, 4, 1], seed=0), [0.0])

    first = policy.sample(np.array([1.0, 0.0]), np.random.default_rng(7))
    second = policy.sample(np.array([1.0, 0.0]), np.random.default_rng(7))

    np.testing.assert_array_equal(first[0], second[0])
    assert first[1] == second[1]


class TestRestrictedPolicy:
    """Tests for region restriction."""

    def test_inside_region_delegates(self) -> None:
        grid = AngularGrid(8)
        region = Region(grid, grid.center_angles() < math.pi, "upper")
        policy = RestrictedPolicy(FeedbackPolicy(lambda o: o[:, 0]), region)

        assert policy.act([0.6, 0.8]) == pytest.approx(0.6)

    def test_outside_region_raises(self) -> None:
        grid = AngularGrid(8)
        region = Region(grid, grid.center_angles() < math.pi, "upper")
        policy = RestrictedPolicy(FeedbackPolicy(lambda o: o[:, 0]), region)

        with pytest.raises(OutOfRegionError) as exc_info:
            policy.act_batch(np.array([[0.6, 0.8], [0.6, -0.8]]))

        assert exc_info.value.region == "upper"
        np.testing.assert_allclose(exc_info.value.state, [0.6, -0.8])

    def test_unwrap_strips_nested_restrictions(self) -> None:
        grid = AngularGrid(8)
        base = linear_gaussian()
        nested = RestrictedPolicy(RestrictedPolicy(base, Region.full(grid)), Region.full(grid))

        assert unwrap(nested) is base
        assert nested.kind == "gaussian"


def test_feedback_policies_cannot_be_serialized() -> None:
    with pytest.raises(TypeError):
        policy_to_payload(FeedbackPolicy(lambda o: o[:, 0]), "unit-circle")


def test_payload_records_environment_and_networks() -> None:
    payload = policy_to_payload(QPolicy(Mlp([2, 4, 5], seed=0), ACTIONS), "obstacle")

    assert payload["kind"] == "q"
    assert payload["environment"] == "obstacle"
    assert payload["action_table"] == list(ACTIONS)
    assert set(payload["networks"]) == {"q"}
