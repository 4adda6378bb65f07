"""Tests for the feedforward networks and the optimizer."""

from __future__ import annotations

import numpy as np
import pytest

from hybridrl import Adam, DivergenceError, Mlp, NoForwardPassError
from hybridrl.exceptions import DimensionMismatchError
from hybridrl.nn import clip_by_global_norm, global_norm


def _loss(net: Mlp, inputs: np.ndarray, weights: np.ndarray) -> float:
    return float(np.sum(net.forward(inputs) * weights))


class TestBackward:
    """Reverse-mode gradients against central finite differences."""

    @pytest.mark.parametrize("batched", [True, False])
    def test_matches_finite_differences(self, batched: bool) -> None:
        rng = np.random.default_rng(1)
        net = Mlp([3, 6, 5, 2], seed=4)
        inputs = rng.normal(size=(7, 3)) if batched else rng.normal(size=3)
        weights = rng.normal(size=(7, 2)) if batched else rng.normal(size=2)

        net.forward(inputs, record=True)
        grads = net.backward(weights)

        eps = 1e-6
        for param, grad in zip(net.params, grads):
            numeric = np.zeros_like(param)
            for index in np.ndindex(param.shape):
                original = param[index]
                param[index] = original + eps
                up = _loss(net, inputs, weights)
                param[index] = original - eps
                down = _loss(net, inputs, weights)
                param[index] = original
                numeric[index] = (up - down) / (2.0 * eps)
            scale = max(1.0, float(np.max(np.abs(numeric))))
            assert float(np.max(np.abs(numeric - grad))) / scale <= 1e-4

    def test_requires_forward_pass(self) -> None:
        net = Mlp([2, 3, 1], seed=0)

        with pytest.raises(NoForwardPassError):
            net.backward(np.ones(1))

    def test_upstream_shape_checked(self) -> None:
        net = Mlp([2, 3, 1], seed=0)
        net.forward(np.ones((4, 2)), record=True)

        with pytest.raises(DimensionMismatchError):
            net.backward(np.ones((3, 1)))


def test_forward_rejects_wrong_width() -> None:
    with pytest.raises(DimensionMismatchError):
        Mlp([2, 3, 1], seed=0).forward(np.ones(3))


def test_same_seed_same_weights() -> None:
    first = Mlp([2, 8, 3], seed=12)
    second = Mlp([2, 8, 3], seed=12)

    for a, b in zip(first.params, second.params):
        np.testing.assert_array_equal(a, b)


def test_payload_restores_outputs() -> None:
    net = Mlp([2, 4, 3], seed=2)
    inputs = np.random.default_rng(0).normal(size=(5, 2))

    restored = Mlp.from_payload(net.to_payload())

    np.testing.assert_array_equal(restored.forward(inputs), net.forward(inputs))


def test_copy_is_independent() -> None:
    net = Mlp([2, 3, 1], seed=0)
    clone = net.copy()

    clone.weights[0] += 1.0

    assert not np.array_equal(clone.weights[0], net.weights[0])


class TestAdam:
    """Tests for the Adam optimizer."""

    def test_minimizes_quadratic(self) -> None:
        param = np.array([3.0, -2.0])
        optimizer = Adam([param], learning_rate=0.1)

        for _ in range(1000):
            optimizer.step([2.0 * param])

        assert np.linalg.norm(param) < 0.05

    def test_rejects_non_finite_gradients(self) -> None:
        param = np.array([1.0, 1.0])
        optimizer = Adam([param], learning_rate=0.1)

        with pytest.raises(DivergenceError) as exc_info:
            optimizer.step([np.array([np.nan, 0.0])])

        assert exc_info.value.step == 0
        np.testing.assert_array_equal(param, [1.0, 1.0])
        assert optimizer.t == 0

    def test_rejects_mismatched_shapes(self) -> None:
        optimizer = Adam([np.zeros(2)])

        with pytest.raises(DimensionMismatchError):
            optimizer.step([np.zeros(3)])


def test_clip_by_global_norm() -> None:
    grads = [np.array([3.0]), np.array([4.0])]

    clipped = clip_by_global_norm(grads, 1.0)

    assert global_norm(clipped) == pytest.approx(1.0)
    assert clip_by_global_norm(grads, 10.0)[0] is grads[0]
