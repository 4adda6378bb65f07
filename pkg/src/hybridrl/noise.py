"""Bounded measurement noise with recorded, replayable sequences."""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .config import NoiseConfig
from .exceptions import HybridRLError
from .models import FloatArray

logger = logging.getLogger(__name__)

# Offsets below this are treated as lying on the boundary.
_ON_BOUNDARY = 1e-12


class NoiseKind(str, Enum):
    """Noise distributions."""

    UNIFORM = "uniform"
    ADVERSARIAL = "adversarial"


@dataclass(frozen=True, slots=True)
class NoiseModel:
    """Bounded noise of magnitude ``magnitude``.

    Uniform noise draws i.i.d. samples on ``[-magnitude, magnitude]``. Adversarial noise
    records the alternating sequence ``+m, -m, +m, ...`` and, when consumed, points each
    perturbation at the critical boundary of the environment (see :class:`NoiseStream`).
    ``center`` places that boundary in the measured coordinate; None attacks the reward
    symmetry line.
    """

    magnitude: float
    kind: NoiseKind = NoiseKind.ADVERSARIAL
    seed: int = 0
    center: float | None = None

    def __post_init__(self) -> None:
        if self.magnitude < 0:
            raise ValueError("Noise magnitude must be non-negative")

    @classmethod
    def from_config(cls, config: NoiseConfig) -> NoiseModel:
        """Build a noise model from its configuration section."""

        return cls(config.magnitude, NoiseKind(config.kind), config.seed)

    def aimed_at(self, center: float) -> NoiseModel:
        """Return a copy attacking the boundary at ``center``."""

        return replace(self, center=center)

    def sequence(self, length: int, *, offset: int = 0) -> FloatArray:
        """Return the recorded sample sequence.

        Args:
            length: Number of samples
            offset: Added to the seed, so distinct runs get distinct uniform sequences

        Returns:
            Array of ``length`` samples, each bounded by ``magnitude``
        """
        if self.kind is NoiseKind.UNIFORM:
            rng = np.random.default_rng(self.seed + offset)
            return rng.uniform(-self.magnitude, self.magnitude, size=length)
        signs = np.where(np.arange(length) % 2 == 0, 1.0, -1.0)
        return signs * self.magnitude

    def stream(self, length: int, *, offset: int = 0) -> NoiseStream:
        """Return a consumable stream over :meth:`sequence`."""

        samples = self.sequence(length, offset=offset)
        return NoiseStream(self.kind, self.magnitude, samples, self.center)


class NoiseStream:
    """Consumes a recorded noise sequence one observation at a time.

    Uniform samples are applied as they are. Adversarial samples are applied as is on the
    boundary; within ``2 * magnitude`` of it the perturbation points toward the boundary and
    at most mirrors the state across it; further away it is zero.
    The environment measures offsets from ``center``, or from its symmetry line when None.
    """

    def __init__(
        self,
        kind: NoiseKind,
        magnitude: float,
        samples: FloatArray,
        center: float | None = None,
    ) -> None:
        self.kind = kind
        self.magnitude = magnitude
        self.center = center
        self.samples = np.asarray(samples, dtype=np.float64)
        self.position = 0

    @property
    def digest(self) -> str:
        """SHA-256 of the recorded sequence."""

        return hashlib.sha256(self.samples.tobytes()).hexdigest()

    def replay(self) -> NoiseStream:
        """Return a fresh stream over the same recorded sequence."""

        return NoiseStream(self.kind, self.magnitude, self.samples, self.center)

    def draw(self, offset: float) -> float:
        """Consume one sample and return the perturbation to apply.

        Args:
            offset: Signed distance of the true state from the critical boundary
                (``inf`` where the environment has no boundary to attack)

        Returns:
            Perturbation with absolute value at most ``magnitude``

        Raises:
            HybridRLError: When the recorded sequence is exhausted
        """
        if self.position >= self.samples.size:
            raise HybridRLError(f"Noise sequence exhausted after {self.samples.size} samples")
        sample = float(self.samples[self.position])
        self.position += 1
        if self.kind is NoiseKind.UNIFORM:
            return sample
        distance = abs(offset)
        if distance < _ON_BOUNDARY:
            return sample
        if distance > 2.0 * self.magnitude:
            return 0.0
        return -float(np.sign(offset)) * min(2.0 * distance, abs(sample))
