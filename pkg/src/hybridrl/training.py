"""Shared reinforcement-learning machinery: replay, restricted environments, evaluation."""

from __future__ import annotations

import csv
import logging
from collections import deque
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .envs import (
    LEFT,
    REACHED,
    ControlEnv,
    StepResult,
    TerminationCause,
)
from .exceptions import TrainingFailedError
from .models import BoolArray, FloatArray, IntArray, MetricsRow
from .policies import Policy
from .regions import Grid, Region
from .simulation import rollout

logger = logging.getLogger(__name__)

METRIC_COLUMNS = (
    "step",
    "mean_return",
    "loss",
    "value_loss",
    "entropy",
    "epsilon",
    "clip_fraction",
)


class ReplayBuffer:
    """Fixed-capacity ring buffer of transitions with uniform sampling."""

    def __init__(self, capacity: int, obs_dim: int, rng: np.random.Generator) -> None:
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.rng = rng
        self.observations = np.zeros((capacity, obs_dim))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.next_observations = np.zeros((capacity, obs_dim))
        self.terminals = np.zeros(capacity)
        self._cursor = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def add(
        self,
        observation: FloatArray,
        action: int,
        reward: float,
        next_observation: FloatArray,
        terminal: bool,
    ) -> None:
        index = self._cursor
        self.observations[index] = observation
        self.actions[index] = action
        self.rewards[index] = reward
        self.next_observations[index] = next_observation
        self.terminals[index] = float(terminal)
        self._cursor = (self._cursor + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(
        self, batch_size: int
    ) -> tuple[FloatArray, IntArray, FloatArray, FloatArray, FloatArray]:
        """Uniformly sample stored transitions (with replacement).

        Raises:
            ValueError: If the buffer is empty
        """
        if self._size == 0:
            raise ValueError("Cannot sample from an empty replay buffer")
        index = self.rng.integers(0, self._size, size=batch_size)
        return (
            self.observations[index],
            self.actions[index],
            self.rewards[index],
            self.next_observations[index],
            self.terminals[index],
        )


def linear_schedule(start: float, end: float, duration: int, step: int) -> float:
    """Linear interpolation from ``start`` to ``end`` over ``duration`` steps, then flat."""

    if duration <= 0:
        return end
    fraction = min(1.0, step / duration)
    return start + fraction * (end - start)


class RestrictedEnv(ControlEnv):
    """An environment whose episodes must stay inside ``region``.

    Leaving the region terminates the episode as ``left_domain`` with an extra penalty.
    Initial conditions are drawn from the base distribution conditioned on the region.
    """

    def __init__(self, base: ControlEnv, region: Region, exit_penalty: float = 10.0) -> None:
        super().__init__(base.config)
        self.base = base
        self.region = region
        self.exit_penalty = exit_penalty
        self.name = base.name
        self.setpoint = base.setpoint
        self.discrete_actions = base.discrete_actions
        self.action_bounds = base.action_bounds

    def _flow(self, states: FloatArray, actions: FloatArray) -> FloatArray:
        return self.base._flow(states, actions)

    def project(self, states: FloatArray) -> FloatArray:
        return self.base.project(states)

    def termination_codes(self, states: FloatArray) -> IntArray:
        codes = self.base.termination_codes(states)
        outside = ~self.region.contains_many(states) & (codes != REACHED)
        codes[outside] = LEFT
        return codes

    def step(
        self, xi: FloatArray | Sequence[float], u: float, elapsed_steps: int | None = None
    ) -> StepResult:
        result = super().step(xi, u, elapsed_steps)
        if result.termination_cause is TerminationCause.LEFT_DOMAIN and not self.region.contains(
            result.next_state
        ):
            return StepResult(
                result.next_state,
                result.reward - self.exit_penalty,
                True,
                TerminationCause.LEFT_DOMAIN,
            )
        return result

    def rewards(self, states: FloatArray) -> FloatArray:
        return self.base.rewards(states)

    def boundary_offset(self, xi: FloatArray, center: float | None = None) -> float:
        return self.base.boundary_offset(xi, center)

    def critical_center(self, critical: Region) -> float:
        return self.base.critical_center(critical)

    def shift(self, xi: FloatArray, delta: float) -> FloatArray:
        return self.base.shift(xi, delta)

    def make_grid(self, resolution: float) -> Grid:
        return self.base.make_grid(resolution)

    def side_of(self, states: FloatArray) -> IntArray:
        return self.base.side_of(states)

    def separation(self, history: FloatArray, codes: IntArray) -> IntArray:
        return self.base.separation(history, codes)

    def probe_states(self, centers: FloatArray, radius: float) -> FloatArray:
        return self.base.probe_states(centers, radius)

    def in_domain(self, states: FloatArray) -> BoolArray:
        return self.base.in_domain(states)  # type: ignore[return-value]

    def transverse_gap(self, first: FloatArray, second: FloatArray) -> float:
        return self.base.transverse_gap(first, second)

    def sample_initial_state(self, rng: np.random.Generator) -> FloatArray:
        for _ in range(100):
            candidate = self.base.sample_initial_state(rng)
            if self.region.contains(candidate):
                return candidate
        centers = self.region.centers()
        return centers[int(rng.integers(0, centers.shape[0]))].copy()  # type: ignore[no-any-return]

    def evaluation_states(self) -> FloatArray:
        states = self.base.evaluation_states()
        inside = states[self.region.contains_many(states)]
        if inside.shape[0] >= 5:
            return inside
        centers = self.region.centers()
        picks = np.linspace(0, centers.shape[0] - 1, num=min(20, centers.shape[0])).astype(int)
        return centers[picks]  # type: ignore[no-any-return]


@dataclass(frozen=True, slots=True)
class EvaluationResult:
    """Noise-free evaluation of a policy."""

    success_rate: float
    reached: BoolArray
    initial_states: FloatArray


def evaluate(
    policy: Policy, env: ControlEnv, states: FloatArray | None = None
) -> EvaluationResult:
    """Fraction of evaluation initial conditions from which the closed loop reaches the set-point.

    Args:
        policy: Deterministic policy
        env: Environment (restricted environments count region exits as failures)
        states: Initial conditions; defaults to ``env.evaluation_states()``

    Returns:
        The evaluation result
    """
    initial = env.evaluation_states() if states is None else states
    result = rollout(env, policy, initial, env.horizon)
    reached = result.codes == REACHED
    return EvaluationResult(float(reached.mean()), reached, initial)


def check_evaluation(
    policy: Policy, env: ControlEnv, threshold: float, *, total_steps: int, seed: int
) -> float:
    """Evaluate and enforce the success bar.

    Raises:
        TrainingFailedError: If the success rate is below ``threshold``
    """
    result = evaluate(policy, env)
    logger.info(
        "Evaluation on %s: %.0f%% of %d initial conditions reached the set-point",
        env.name,
        100.0 * result.success_rate,
        result.reached.size,
    )
    if result.success_rate < threshold:
        raise TrainingFailedError(
            "Trained policy misses the evaluation bar",
            success_rate=result.success_rate,
            threshold=threshold,
            total_steps=total_steps,
            seed=seed,
        )
    return result.success_rate


class MetricsLog:
    """Per-iteration training metrics, written as CSV."""

    def __init__(self) -> None:
        self.rows: list[MetricsRow] = []

    def record(self, row: MetricsRow) -> None:
        self.rows.append(row)

    def write_csv(self, path: Path) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.DictWriter(handle, fieldnames=METRIC_COLUMNS, restval="")
            writer.writeheader()
            for row in self.rows:
                writer.writerow(dict(row))


class EpisodeTracker:
    """Running mean of the returns of the most recent episodes."""

    def __init__(self, window: int = 20) -> None:
        self.returns: deque[float] = deque(maxlen=window)
        self.current = 0.0
        self.episodes = 0

    def add(self, reward: float, done: bool) -> None:
        self.current += reward
        if done:
            self.returns.append(self.current)
            self.current = 0.0
            self.episodes += 1

    @property
    def mean_return(self) -> float:
        return float(np.mean(self.returns)) if self.returns else float("nan")
