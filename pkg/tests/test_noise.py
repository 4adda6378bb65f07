from __future__ import annotations

import numpy as np
import pytest

from hybridrl import HybridRLError, NoiseKind, NoiseModel
from hybridrl.config import NoiseConfig


def test_adversarial_sequence_alternates() -> None:
    samples = NoiseModel(0.1).sequence(5)

    np.testing.assert_allclose(samples, [0.1, -0.1, 0.1, -0.1, 0.1])


def test_uniform_sequence_is_bounded_and_seeded() -> None:
    model = NoiseModel(0.2, NoiseKind.UNIFORM, seed=5)

    first = model.sequence(1000)
    again = model.sequence(1000)
    shifted = model.sequence(1000, offset=1)

    assert np.all(np.abs(first) <= 0.2)
    np.testing.assert_array_equal(first, again)
    assert not np.array_equal(first, shifted)


def test_replay_has_identical_digest() -> None:
    stream = NoiseModel(0.1, NoiseKind.UNIFORM, seed=3).stream(20)
    stream.draw(0.0)

    replayed = stream.replay()

    assert replayed.digest == stream.digest
    assert replayed.position == 0


def test_digest_differs_between_sequences() -> None:
    model = NoiseModel(0.1, NoiseKind.UNIFORM)

    assert model.stream(10).digest != model.stream(10, offset=1).digest


def test_adversarial_draw_points_at_boundary() -> None:
    stream = NoiseModel(0.1).stream(4)

    assert stream.draw(0.0) == pytest.approx(0.1)
    assert stream.draw(0.03) == pytest.approx(-0.06)
    assert stream.draw(-0.15) == pytest.approx(0.1)
    assert stream.draw(0.5) == 0.0


def test_exhausted_stream_raises() -> None:
    stream = NoiseModel(0.1).stream(1)
    stream.draw(0.0)

    with pytest.raises(HybridRLError, match="exhausted"):
        stream.draw(0.0)


def test_negative_magnitude_rejected() -> None:
    with pytest.raises(ValueError):
        NoiseModel(-0.1)


def test_from_config() -> None:
    model = NoiseModel.from_config(NoiseConfig(magnitude=0.05, kind="uniform", seed=9))

    assert model == NoiseModel(0.05, NoiseKind.UNIFORM, 9)
