"""Deterministic control policies backed by trained networks."""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from collections.abc import Callable, Sequence
from typing import Any, ClassVar

import numpy as np

from .envs import as_states
from .exceptions import OutOfRegionError
from .models import FloatArray, IntArray, PolicyPayload
from .nn import Mlp
from .regions import Region

POLICY_FORMAT = "hybridrl.policy"
POLICY_VERSION = 1

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class Policy(ABC):
    """Maps observations to actions."""

    kind: ClassVar[str] = "policy"

    def act(self, observation: FloatArray | Sequence[float]) -> float:
        """Action for a single observation."""

        return float(self.act_batch(as_states(observation)[None, :])[0])

    @abstractmethod
    def act_batch(self, observations: FloatArray) -> FloatArray:
        """Actions for observations of shape ``(N, d)``."""


class QPolicy(Policy):
    """Greedy policy over a Q-network; ties go to the lowest action index."""

    kind = "q"

    def __init__(self, q_net: Mlp, action_table: Sequence[float]) -> None:
        if q_net.output_dim != len(action_table):
            raise ValueError("Q-network outputs must match the action table")
        self.q_net = q_net
        self.action_table = np.asarray(action_table, dtype=np.float64)

    def q_values(self, observations: FloatArray) -> FloatArray:
        return self.q_net.forward(np.asarray(observations, dtype=np.float64))

    def greedy_indices(self, observations: FloatArray) -> IntArray:
        # np.argmax returns the first maximal index.
        return np.argmax(self.q_values(observations), axis=-1)  # type: ignore[no-any-return]

    def act_batch(self, observations: FloatArray) -> FloatArray:
        return self.action_table[self.greedy_indices(observations)]  # type: ignore[no-any-return]


class GaussianPolicy(Policy):
    """Gaussian actor ``N(mu(o), diag(exp(log_std))^2)`` with a state-independent std.

    The deterministic action is the mean clamped to the action bounds. A critic network can
    ride along so retraining can be warm-started.
    """

    kind = "gaussian"

    def __init__(
        self,
        mean_net: Mlp,
        log_std: FloatArray | Sequence[float],
        action_bounds: tuple[float, float] = (-1.0, 1.0),
        value_net: Mlp | None = None,
    ) -> None:
        self.mean_net = mean_net
        self.log_std = np.array(log_std, dtype=np.float64).reshape(mean_net.output_dim)
        self.action_bounds = (float(action_bounds[0]), float(action_bounds[1]))
        self.value_net = value_net

    @property
    def std(self) -> FloatArray:
        return np.exp(self.log_std)  # type: ignore[no-any-return]

    def mean(self, observations: FloatArray) -> FloatArray:
        return self.mean_net.forward(np.asarray(observations, dtype=np.float64))

    def act_batch(self, observations: FloatArray) -> FloatArray:
        return np.clip(self.mean(observations)[..., 0], *self.action_bounds)  # type: ignore[no-any-return]

    def log_prob(self, observations: FloatArray, actions: FloatArray) -> FloatArray:
        """Log-density of unclamped actions ``(N, action_dim)``."""

        return gaussian_log_prob(actions, self.mean(observations), self.log_std)

    def sample(
        self, observation: FloatArray, rng: np.random.Generator
    ) -> tuple[FloatArray, float]:
        """Draw an unclamped action for one observation and return it with its log-density."""

        mean = self.mean(as_states(observation))
        action = mean + self.std * rng.standard_normal(mean.shape)
        return action, float(gaussian_log_prob(action[None, :], mean[None, :], self.log_std)[0])


def gaussian_log_prob(actions: FloatArray, means: FloatArray, log_std: FloatArray) -> FloatArray:
    """Diagonal Gaussian log-density summed over the action dimension."""

    z = (actions - means) / np.exp(log_std)
    return np.sum(-0.5 * z * z - log_std - _LOG_SQRT_2PI, axis=-1)  # type: ignore[no-any-return]


class FeedbackPolicy(Policy):
    """Policy given by an explicit batched feedback law."""

    kind = "feedback"

    def __init__(self, law: Callable[[FloatArray], FloatArray], name: str = "feedback") -> None:
        self.law = law
        self.name = name

    def act_batch(self, observations: FloatArray) -> FloatArray:
        return np.asarray(self.law(np.asarray(observations, dtype=np.float64)), dtype=np.float64)


class RestrictedPolicy(Policy):
    """A policy that may only be queried inside ``region``."""

    def __init__(self, base: Policy, region: Region) -> None:
        self.base = base
        self.region = region
        self.kind = base.kind  # type: ignore[misc]

    def act_batch(self, observations: FloatArray) -> FloatArray:
        inside = self.region.contains_many(observations)
        if not bool(inside.all()):
            raise OutOfRegionError(observations[~inside][0], self.region.name)
        return self.base.act_batch(observations)


def unwrap(policy: Policy) -> Policy:
    """Strip region restrictions."""

    while isinstance(policy, RestrictedPolicy):
        policy = policy.base
    return policy


def policy_to_payload(
    policy: Policy, environment: str, metadata: dict[str, Any] | None = None
) -> PolicyPayload:
    """Serialize a network-backed policy.

    Raises:
        TypeError: For policies without networks (feedback laws)
    """
    base = unwrap(policy)
    payload: PolicyPayload = {
        "format": POLICY_FORMAT,
        "version": POLICY_VERSION,
        "kind": base.kind,
        "environment": environment,
    }
    if isinstance(base, QPolicy):
        payload["action_table"] = base.action_table.tolist()
        payload["networks"] = {"q": base.q_net.to_payload()}
    elif isinstance(base, GaussianPolicy):
        payload["action_bounds"] = list(base.action_bounds)
        payload["log_std"] = base.log_std.tolist()
        networks = {"mean": base.mean_net.to_payload()}
        if base.value_net is not None:
            networks["value"] = base.value_net.to_payload()
        payload["networks"] = networks
    else:
        raise TypeError(f"Policy of kind {base.kind!r} cannot be serialized")
    if metadata is not None:
        payload["metadata"] = metadata
    return payload
