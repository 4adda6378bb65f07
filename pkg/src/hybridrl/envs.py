"""Benchmark control environments and their Euler discretization."""

from __future__ import annotations

import logging
import math
from abc import ABC, abstractmethod
from collections.abc import Sequence
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .config import OBSTACLE, UNIT_CIRCLE, EnvConfig
from .exceptions import ActionOutOfBoundsError, ConfigError, DimensionMismatchError
from .models import FloatArray, IntArray
from .noise import NoiseStream
from .regions import AngularGrid, BoxGrid, Grid, Region

logger = logging.getLogger(__name__)

STATE_DIM = 2

# Integer termination codes used by batched simulation.
RUNNING = 0
REACHED = 1
CRASHED = 2
LEFT = 3

# Sentinel side label for trajectories that belong to neither partition.
NO_SIDE = -1


class TerminationCause(str, Enum):
    """Why an episode ended."""

    REACHED_SETPOINT = "reached_setpoint"
    CRASHED = "crashed"
    LEFT_DOMAIN = "left_domain"
    HORIZON = "horizon"

    @classmethod
    def from_code(cls, code: int) -> TerminationCause | None:
        """Map a batched termination code to a cause."""

        return _CODE_TO_CAUSE.get(int(code))


_CODE_TO_CAUSE = {
    REACHED: TerminationCause.REACHED_SETPOINT,
    CRASHED: TerminationCause.CRASHED,
    LEFT: TerminationCause.LEFT_DOMAIN,
}


@dataclass(frozen=True, slots=True)
class StepResult:
    """Outcome of one environment step."""

    next_state: FloatArray
    reward: float
    terminated: bool
    termination_cause: TerminationCause | None = None

    def __post_init__(self) -> None:
        if self.terminated != (self.termination_cause is not None):
            raise ValueError("terminated must be set exactly when a termination cause is given")


def as_states(states: FloatArray | Sequence[float]) -> FloatArray:
    """Return ``states`` as a float array with trailing state dimension."""

    array = np.asarray(states, dtype=np.float64)
    if array.shape[-1] != STATE_DIM:
        raise DimensionMismatchError("State has wrong dimension", STATE_DIM, array.shape[-1])
    return array


def wrap_angle(angle: FloatArray | float) -> FloatArray:
    """Wrap angles to ``[0, 2*pi)``."""

    return np.mod(angle, 2.0 * np.pi)  # type: ignore[no-any-return]


def wrap_signed(angle: FloatArray | float) -> FloatArray:
    """Wrap angles to ``[-pi, pi)``."""

    return np.mod(np.asarray(angle) + np.pi, 2.0 * np.pi) - np.pi  # type: ignore[no-any-return]


class ControlEnv(ABC):
    """A planar control system ``xi' = f(xi, u)`` sampled every ``dt`` seconds.

    All batched methods take arrays of shape ``(N, 2)``. Environments hold no mutable
    state, so one instance may be shared freely.
    """

    name: str
    setpoint: FloatArray
    discrete_actions: tuple[float, ...] | None = None
    action_bounds: tuple[float, float] = (-1.0, 1.0)

    def __init__(self, config: EnvConfig) -> None:
        self.config = config
        self.dt = config.dt
        self.horizon = config.horizon
        self.tolerance = config.tolerance

    @property
    def is_discrete(self) -> bool:
        """Whether actions come from a finite table."""

        return self.discrete_actions is not None

    # Dynamics
    @abstractmethod
    def _flow(self, states: FloatArray, actions: FloatArray) -> FloatArray: ...

    @abstractmethod
    def project(self, states: FloatArray) -> FloatArray:
        """Map raw Euler updates back into the constraint set."""

    def check_actions(self, actions: FloatArray | float) -> FloatArray:
        """Validate actions against the action set.

        Raises:
            ActionOutOfBoundsError: If any action is inadmissible
        """
        values = np.atleast_1d(np.asarray(actions, dtype=np.float64))
        if self.discrete_actions is not None:
            table = np.asarray(self.discrete_actions)
            admissible = np.isclose(values[:, None], table[None, :], atol=1e-9).any(axis=1)
            allowed: Sequence[float] = self.discrete_actions
        else:
            low, high = self.action_bounds
            admissible = (values >= low - 1e-12) & (values <= high + 1e-12)
            allowed = self.action_bounds
        if not bool(np.all(admissible)):
            bad = float(values[~admissible][0])
            raise ActionOutOfBoundsError(bad, self.name, allowed)
        return values

    def flow(self, xi: FloatArray | Sequence[float], u: FloatArray | float) -> FloatArray:
        """Return the state derivative ``f(xi, u)``.

        Args:
            xi: State ``(2,)`` or batch ``(N, 2)``
            u: Action, scalar or ``(N,)``

        Returns:
            Derivative with the shape of ``xi``

        Raises:
            ActionOutOfBoundsError: If an action is inadmissible
        """
        states = as_states(xi)
        actions = self.check_actions(u)
        batch = np.atleast_2d(states)
        result = self._flow(batch, np.broadcast_to(actions, (batch.shape[0],)))
        return result.reshape(states.shape)

    def advance(
        self, states: FloatArray, actions: FloatArray, *, dt: float | None = None
    ) -> FloatArray:
        """Batched Euler step followed by projection (actions are not validated)."""

        step = self.dt if dt is None else dt
        return self.project(states + step * self._flow(states, actions))

    def step(
        self,
        xi: FloatArray | Sequence[float],
        u: float,
        elapsed_steps: int | None = None,
    ) -> StepResult:
        """Advance one sampling period.

        Args:
            xi: Current state
            u: Action
            elapsed_steps: Steps already taken in the episode; when given, the episode is
                truncated with ``horizon`` once the horizon is reached

        Returns:
            The step result, with the reward evaluated at the next state

        Raises:
            ActionOutOfBoundsError: If ``u`` is inadmissible
        """
        state = as_states(xi)
        actions = self.check_actions(u)
        next_state = self.advance(state[None, :], actions)[0]
        cause = TerminationCause.from_code(int(self.termination_codes(next_state[None, :])[0]))
        if cause is None and elapsed_steps is not None and elapsed_steps + 1 >= self.horizon:
            cause = TerminationCause.HORIZON
        reward = float(self.rewards(next_state[None, :])[0])
        return StepResult(next_state, reward, cause is not None, cause)

    @abstractmethod
    def termination_codes(self, states: FloatArray) -> IntArray:
        """Batched termination codes (``RUNNING``, ``REACHED``, ``CRASHED``, ``LEFT``)."""

    @abstractmethod
    def rewards(self, states: FloatArray) -> FloatArray:
        """Batched reward."""

    def reward(self, xi: FloatArray | Sequence[float]) -> float:
        """Reward at a single state."""

        return float(self.rewards(as_states(xi)[None, :])[0])

    def distance_to_setpoint(self, states: FloatArray) -> FloatArray:
        """Euclidean distance to the set-point."""

        return np.linalg.norm(as_states(states) - self.setpoint, axis=-1)  # type: ignore[no-any-return]

    # Observation
    @abstractmethod
    def boundary_offset(self, xi: FloatArray, center: float | None = None) -> float:
        """Signed distance from the critical boundary targeted by adversarial noise.

        ``center`` is the boundary position in the measured coordinate; None uses the reward
        symmetry line.
        """

    @abstractmethod
    def critical_center(self, critical: Region) -> float:
        """Position of ``critical`` in the measured coordinate, to aim adversarial noise at."""

    @abstractmethod
    def shift(self, xi: FloatArray, delta: float) -> FloatArray:
        """Perturb the measured coordinate of ``xi`` by ``delta``."""

    def observe(
        self, xi: FloatArray | Sequence[float], noise: NoiseStream | None = None
    ) -> FloatArray:
        """Return the (possibly noisy) measurement ``o(xi)``.

        Args:
            xi: True state
            noise: Stream to draw one perturbation from; None measures exactly

        Returns:
            Observed state
        """
        state = as_states(xi)
        if noise is None:
            return state.copy()
        return self.shift(state, noise.draw(self.boundary_offset(state, noise.center)))

    # Geometry used by the design pipeline
    @abstractmethod
    def make_grid(self, resolution: float) -> Grid:
        """Grid covering the constraint set."""

    @abstractmethod
    def side_of(self, states: FloatArray) -> IntArray:
        """Which side of the reward symmetry line each state lies on (0 or 1)."""

    @abstractmethod
    def separation(self, history: FloatArray, codes: IntArray) -> IntArray:
        """Classify trajectories by the partition they head into.

        Args:
            history: States of shape ``(T + 1, N, 2)``
            codes: Final termination codes ``(N,)``

        Returns:
            0 or 1 per trajectory, or ``NO_SIDE``
        """

    @abstractmethod
    def probe_states(self, centers: FloatArray, radius: float) -> FloatArray:
        """Probe states at distance ``radius`` around each center, shape ``(N, P, 2)``."""

    def in_domain(self, states: FloatArray) -> FloatArray:
        """Whether states lie in the constraint set (backward trajectories stop outside)."""

        return np.ones(states.shape[0], dtype=bool)  # type: ignore[return-value]

    def transverse_gap(self, first: FloatArray, second: FloatArray) -> float:
        """Distance between two states measured across the critical set."""

        return abs(float(second[1]) - float(first[1]))

    @abstractmethod
    def sample_initial_state(self, rng: np.random.Generator) -> FloatArray:
        """Draw a training initial condition."""

    @abstractmethod
    def evaluation_states(self) -> FloatArray:
        """Noise-free evaluation initial conditions."""


class UnitCircleEnv(ControlEnv):
    """Point on the unit circle steered by its angular velocity ``u``.

    ``u > 0`` rotates counterclockwise. The set-point is ``[1, 0]`` and the reward is
    ``-|atan2(y, x)| / pi``, which has its minimum at the critical angle ``pi``.
    """

    name = UNIT_CIRCLE
    setpoint = np.array([1.0, 0.0])

    def _flow(self, states: FloatArray, actions: FloatArray) -> FloatArray:
        rotated = np.stack([-states[:, 1], states[:, 0]], axis=1)
        return actions[:, None] * rotated  # type: ignore[no-any-return]

    def project(self, states: FloatArray) -> FloatArray:
        return states / np.linalg.norm(states, axis=-1, keepdims=True)  # type: ignore[no-any-return]

    def angles(self, states: FloatArray) -> FloatArray:
        """Angles in ``[0, 2*pi)``."""

        return wrap_angle(np.arctan2(states[..., 1], states[..., 0]))

    def termination_codes(self, states: FloatArray) -> IntArray:
        reached = self.distance_to_setpoint(states) <= self.tolerance
        return np.where(reached, REACHED, RUNNING).astype(np.int64)

    def rewards(self, states: FloatArray) -> FloatArray:
        return -np.abs(np.arctan2(states[:, 1], states[:, 0])) / np.pi  # type: ignore[no-any-return]

    def boundary_offset(self, xi: FloatArray, center: float | None = None) -> float:
        target = np.pi if center is None else center
        return float(wrap_signed(self.angles(xi) - target))

    def critical_center(self, critical: Region) -> float:
        angles = self.angles(critical.centers())
        return float(wrap_angle(np.arctan2(np.sin(angles).mean(), np.cos(angles).mean())))

    def shift(self, xi: FloatArray, delta: float) -> FloatArray:
        angle = math.atan2(float(xi[1]), float(xi[0])) + delta
        return np.array([math.cos(angle), math.sin(angle)])

    def make_grid(self, resolution: float) -> AngularGrid:
        return AngularGrid(max(3, round(2.0 * math.pi / resolution)))

    def side_of(self, states: FloatArray) -> IntArray:
        return np.where(self.angles(states) < np.pi, 0, 1).astype(np.int64)

    def separation(self, history: FloatArray, codes: IntArray) -> IntArray:
        angles = np.arctan2(history[..., 1], history[..., 0])
        travelled = wrap_signed(np.diff(angles, axis=0)).sum(axis=0)
        started_inside = self.termination_codes(history[0]) == REACHED
        sides = np.where(travelled < 0.0, 0, 1)
        undecided = started_inside | (np.abs(travelled) < 1e-6)
        return np.where(undecided, NO_SIDE, sides).astype(np.int64)

    def transverse_gap(self, first: FloatArray, second: FloatArray) -> float:
        return abs(float(wrap_signed(self.angles(second) - self.angles(first))))

    def probe_states(self, centers: FloatArray, radius: float) -> FloatArray:
        base = np.arctan2(centers[:, 1], centers[:, 0])
        offsets = np.array([radius, -radius])
        angles = base[:, None] + offsets[None, :]
        return np.stack([np.cos(angles), np.sin(angles)], axis=-1)  # type: ignore[no-any-return]

    def sample_initial_state(self, rng: np.random.Generator) -> FloatArray:
        angle = rng.uniform(0.0, 2.0 * np.pi)
        return np.array([math.cos(angle), math.sin(angle)])

    def evaluation_states(self) -> FloatArray:
        angles = (np.arange(20) + 0.5) * 2.0 * np.pi / 20
        return np.stack([np.cos(angles), np.sin(angles)], axis=1)  # type: ignore[no-any-return]

    @staticmethod
    def state_at(angle: float) -> FloatArray:
        """State on the circle at ``angle`` radians."""

        return np.array([math.cos(angle), math.sin(angle)])


class ObstacleEnv(ControlEnv):
    """Vehicle moving right at unit speed, steering its lateral velocity around a block.

    The reward is the normalized negative distance to ``[3, 0]``, with extra penalties inside
    the obstacle and outside the state box. Both are symmetric in ``y``.
    """

    name = OBSTACLE
    setpoint = np.array([3.0, 0.0])

    def __init__(self, config: EnvConfig) -> None:
        super().__init__(config)
        self.discrete_actions = tuple(float(a) for a in config.actions)
        self.action_bounds = (min(self.discrete_actions), max(self.discrete_actions))
        self.obstacle_x = config.obstacle_x
        self.obstacle_y = config.obstacle_y
        self.x_bounds = config.x_bounds
        self.y_bounds = config.y_bounds
        # Normalizer of the distance reward: |[3, 1.5]| for the default box.
        self._scale = float(np.hypot(self.x_bounds[1], self.y_bounds[1]))

    def _flow(self, states: FloatArray, actions: FloatArray) -> FloatArray:
        return np.stack([np.ones(states.shape[0]), actions], axis=1)  # type: ignore[no-any-return]

    def project(self, states: FloatArray) -> FloatArray:
        projected = states.copy()
        projected[:, 1] = np.clip(projected[:, 1], *self.y_bounds)
        return projected

    def inside_obstacle(self, states: FloatArray) -> FloatArray:
        """Whether states lie in the (closed) obstacle rectangle."""

        x, y = states[..., 0], states[..., 1]
        return (  # type: ignore[no-any-return]
            (x >= self.obstacle_x[0])
            & (x <= self.obstacle_x[1])
            & (y >= self.obstacle_y[0])
            & (y <= self.obstacle_y[1])
        )

    def in_domain(self, states: FloatArray) -> FloatArray:
        x, y = states[..., 0], states[..., 1]
        return (  # type: ignore[no-any-return]
            (x >= self.x_bounds[0])
            & (x <= self.x_bounds[1])
            & (y >= self.y_bounds[0])
            & (y <= self.y_bounds[1])
        )

    def termination_codes(self, states: FloatArray) -> IntArray:
        reached = self.distance_to_setpoint(states) <= self.tolerance
        crashed = self.inside_obstacle(states)
        left = ~self.in_domain(states)
        codes = np.full(states.shape[0], RUNNING, dtype=np.int64)
        codes[left] = LEFT
        codes[crashed] = CRASHED
        codes[reached] = REACHED
        return codes

    def rewards(self, states: FloatArray) -> FloatArray:
        reward = -self.distance_to_setpoint(states) / self._scale
        reward = reward - self.config.crash_penalty * self.inside_obstacle(states)
        return reward - self.config.exit_penalty * ~self.in_domain(states)  # type: ignore[no-any-return]

    def boundary_offset(self, xi: FloatArray, center: float | None = None) -> float:
        # The critical region lies upstream of the obstacle.
        if float(xi[0]) > self.obstacle_x[1]:
            return math.inf
        return float(xi[1]) - (0.0 if center is None else center)

    def critical_center(self, critical: Region) -> float:
        members = critical.centers()
        upstream = members[members[:, 0] <= self.obstacle_x[1]]
        if upstream.shape[0] == 0:
            return 0.0
        return float(np.median(upstream[:, 1]))

    def shift(self, xi: FloatArray, delta: float) -> FloatArray:
        return np.array([float(xi[0]), float(xi[1]) + delta])

    def make_grid(self, resolution: float) -> BoxGrid:
        return BoxGrid(self.x_bounds, self.y_bounds, resolution)

    def side_of(self, states: FloatArray) -> IntArray:
        return np.where(states[..., 1] >= 0.0, 0, 1).astype(np.int64)

    def separation(self, history: FloatArray, codes: IntArray) -> IntArray:
        x, y = history[..., 0], history[..., 1]
        passed = x > self.obstacle_x[1]
        ever = passed.any(axis=0)
        first = np.argmax(passed, axis=0)
        y_pass = y[first, np.arange(history.shape[1])]
        sides = np.where(y_pass > 0.0, 0, np.where(y_pass < 0.0, 1, NO_SIDE))
        upstream = history[0, :, 0] < self.obstacle_x[0]
        valid = ever & upstream & (codes != CRASHED)
        return np.where(valid, sides, NO_SIDE).astype(np.int64)

    def probe_states(self, centers: FloatArray, radius: float) -> FloatArray:
        angles = np.arange(8) * np.pi / 4.0
        directions = np.stack([np.cos(angles), np.sin(angles)], axis=1)
        return centers[:, None, :] + radius * directions[None, :, :]  # type: ignore[no-any-return]

    def sample_initial_state(self, rng: np.random.Generator) -> FloatArray:
        return np.array([rng.uniform(0.0, 0.5), rng.uniform(-1.0, 1.0)])

    def evaluation_states(self) -> FloatArray:
        ys = np.linspace(-1.0, 1.0, 20)
        return np.stack([np.zeros_like(ys), ys], axis=1)  # type: ignore[no-any-return]


def make_env(name: str, config: EnvConfig | None = None) -> ControlEnv:
    """Instantiate an environment by name.

    Raises:
        ConfigError: If the name is unknown
    """
    env_config = config or EnvConfig(horizon=60 if name == OBSTACLE else 200)
    if name == UNIT_CIRCLE:
        return UnitCircleEnv(env_config)
    if name == OBSTACLE:
        return ObstacleEnv(env_config)
    raise ConfigError("Unknown environment", key="environment", value=name)
