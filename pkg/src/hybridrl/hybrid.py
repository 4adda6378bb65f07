"""Hysteresis-switching hybrid closed loop and its solver."""

from __future__ import annotations

import csv
import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .envs import RUNNING, ControlEnv, TerminationCause, as_states
from .exceptions import CoverageError, HybridSystemError, ZenoError
from .extend import overlap_width
from .models import FloatArray, TrajectoryManifest
from .noise import NoiseStream
from .policies import Policy, RestrictedPolicy, unwrap
from .regions import Region

logger = logging.getLogger(__name__)

TRAJECTORY_COLUMNS = ("t", "j", "x", "y", "q", "u", "reward", "event")


class FlowEvent(str, Enum):
    """What produced a trajectory sample."""

    START = "start"
    FLOW = "flow"
    JUMP = "jump"


@dataclass(frozen=True, slots=True)
class HybridState:
    """Continuous state ``xi`` and logic variable ``q``."""

    xi: FloatArray
    q: int

    def __post_init__(self) -> None:
        if self.q not in (0, 1):
            raise ValueError(f"Logic variable must be 0 or 1, got {self.q!r}")
        object.__setattr__(self, "xi", as_states(self.xi).copy())

    def toggled(self) -> HybridState:
        """The jump map: same ``xi``, ``q`` flipped."""

        return HybridState(self.xi, 1 - self.q)


@dataclass(frozen=True)
class HybridSystem:
    """Two region policies glued by hysteresis.

    The flow set for mode ``q`` is the extended region ``regions[q]``; the jump set is the
    closure of its complement, so both sets share the boundary band of the region.
    ``critical``, when known, is the critical set the overlap width is measured across.
    """

    env: ControlEnv
    policies: tuple[Policy, Policy]
    regions: tuple[Region, Region]
    max_jumps: int = 100
    critical: Region | None = None

    def flow_set(self, q: int) -> Region:
        return self.regions[q]

    def jump_set(self, q: int) -> Region:
        region = self.regions[q]
        return region.complement().dilate(1).renamed(f"D{q}")

    def in_flow_set(self, xi: FloatArray, q: int) -> bool:
        return self.regions[q].contains(xi)

    def in_jump_set(self, xi: FloatArray, q: int) -> bool:
        return self.jump_set(q).contains(xi)

    @property
    def overlap_width(self) -> float:
        return overlap_width(self.regions[0], self.regions[1], self.critical)

    @property
    def overlap(self) -> Region:
        return self.regions[0].intersection(self.regions[1], "overlap")

    def mode_of(self, xi: FloatArray | Sequence[float]) -> int | None:
        """The only mode whose flow set contains ``xi``, or None inside the overlap."""

        state = as_states(xi)
        inside = [self.in_flow_set(state, q) for q in (0, 1)]
        if inside[0] and inside[1]:
            return None
        return 0 if inside[0] else 1

    def uncovered(self) -> Region:
        """Cells of the state space outside both extended regions."""

        return self.regions[0].union(self.regions[1]).complement("uncovered")


def assemble(
    env: ControlEnv,
    policy0: Policy,
    policy1: Policy,
    region0: Region,
    region1: Region,
    *,
    max_jumps: int = 100,
    critical: Region | None = None,
) -> HybridSystem:
    """Build the hybrid system from the two region policies and their extended regions.

    Each policy is restricted to its extended region, so a query outside the flow set fails
    loudly instead of returning an untrained action.

    Args:
        env: Environment
        policy0: Policy for ``q = 0``
        policy1: Policy for ``q = 1``
        region0: Extended region of ``q = 0``
        region1: Extended region of ``q = 1``
        max_jumps: Zeno guard used by :func:`solve`
        critical: Critical set the overlap is measured across

    Returns:
        The assembled system

    Raises:
        GridMismatchError: If the regions live on different grids
        CoverageError: If the regions do not cover the state space
    """
    system = HybridSystem(
        env,
        (RestrictedPolicy(unwrap(policy0), region0), RestrictedPolicy(unwrap(policy1), region1)),
        (region0, region1),
        max_jumps,
        critical,
    )
    missing = system.uncovered()
    if not missing.is_empty:
        raise CoverageError("Extended regions do not cover the state space", missing.size)
    logger.info(
        "Assembled hybrid system: %s; %s; overlap width %.4f",
        region0.summary(),
        region1.summary(),
        system.overlap_width,
    )
    return system


@dataclass(frozen=True, slots=True)
class StepOutcome:
    """Result of one hybrid step."""

    state: HybridState
    event: FlowEvent
    observation: FloatArray
    action: float | None = None


def hybrid_step(
    system: HybridSystem,
    z: HybridState,
    noise: NoiseStream | None = None,
    *,
    observation: FloatArray | None = None,
) -> StepOutcome:
    """Flow one Euler step if the observed state lies in the active flow set, else jump.

    Args:
        system: Hybrid system
        z: Current hybrid state
        noise: Stream to draw the measurement perturbation from
        observation: Reuse this observation instead of measuring (the step after a jump)

    Returns:
        The next state, the event, the observation used and the applied action

    Raises:
        HybridSystemError: If the observation lies in neither set of the active mode
    """
    env = system.env
    observed = env.observe(z.xi, noise) if observation is None else observation
    if system.in_flow_set(observed, z.q):
        action = system.policies[z.q].act(observed)
        nxt = env.advance(z.xi[None, :], np.array([action]))[0]
        return StepOutcome(HybridState(nxt, z.q), FlowEvent.FLOW, observed, action)
    if not system.in_jump_set(observed, z.q):
        raise HybridSystemError(f"State {observed.tolist()} is in neither C nor D for q={z.q}")
    return StepOutcome(z.toggled(), FlowEvent.JUMP, observed)


@dataclass(frozen=True, slots=True)
class TrajectorySample:
    """One point of a solution on its hybrid time domain."""

    t: float
    j: int
    xi: FloatArray
    q: int | None
    u: float | None
    reward: float
    event: FlowEvent


@dataclass(slots=True)
class HybridTrajectory:
    """A sampled solution; ``q`` is None throughout for plain policies."""

    samples: list[TrajectorySample] = field(default_factory=list)
    termination: TerminationCause | None = None
    noise_digest: str | None = None

    @property
    def states(self) -> FloatArray:
        return np.array([sample.xi for sample in self.samples])

    @property
    def times(self) -> FloatArray:
        return np.array([sample.t for sample in self.samples])

    @property
    def jumps(self) -> int:
        return self.samples[-1].j if self.samples else 0

    @property
    def final(self) -> TrajectorySample:
        return self.samples[-1]

    def flow_segments(self) -> list[list[TrajectorySample]]:
        """Samples grouped by jump counter, each a flow arc with constant ``j``."""

        segments: list[list[TrajectorySample]] = []
        for sample in self.samples:
            if not segments or segments[-1][0].j != sample.j:
                segments.append([])
            segments[-1].append(sample)
        return segments

    def jump_records(self) -> list[tuple[float, int, int]]:
        """``(t, j_before, q_after)`` for every jump."""

        return [
            (sample.t, sample.j - 1, sample.q)
            for sample in self.samples
            if sample.event is FlowEvent.JUMP and sample.q is not None
        ]

    def jump_states(self) -> list[FloatArray]:
        return [sample.xi for sample in self.samples if sample.event is FlowEvent.JUMP]

    def dwell_distances(self, env: ControlEnv) -> list[float]:
        """Transverse travel between consecutive jumps."""

        points = self.jump_states()
        return [env.transverse_gap(a, b) for a, b in zip(points, points[1:])]

    def rows(self) -> list[list[str]]:
        rows = []
        for sample in self.samples:
            rows.append(
                [
                    repr(sample.t),
                    str(sample.j),
                    repr(float(sample.xi[0])),
                    repr(float(sample.xi[1])),
                    "" if sample.q is None else str(sample.q),
                    "" if sample.u is None else repr(sample.u),
                    repr(sample.reward),
                    sample.event.value,
                ]
            )
        return rows

    def write_csv(self, path: Path) -> None:
        """Write the samples with columns ``t, j, x, y, q, u, reward, event``."""

        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(TRAJECTORY_COLUMNS)
            writer.writerows(self.rows())

    def manifest(self) -> TrajectoryManifest:
        final = self.final
        return {
            "termination": self.termination.value if self.termination else "duration",
            "jumps": self.jumps,
            "final_state": [float(v) for v in final.xi],
            "final_q": final.q,
            "samples": len(self.samples),
        }


def _termination(env: ControlEnv, xi: FloatArray) -> TerminationCause | None:
    code = int(env.termination_codes(xi[None, :])[0])
    return None if code == RUNNING else TerminationCause.from_code(code)


def _n_steps(env: ControlEnv, duration: float) -> int:
    return max(0, round(duration / env.dt))


def solve(
    system: HybridSystem,
    z0: HybridState,
    duration: float,
    noise: NoiseStream | None = None,
) -> HybridTrajectory:
    """Simulate the hybrid closed loop for ``duration`` seconds.

    The solution flows while the observed state stays in the active flow set and jumps
    otherwise. A jump is instantaneous: the observation that triggered it also decides the
    next flow step, so every flow step consumes exactly one noise sample.

    Args:
        system: Hybrid system
        z0: Initial hybrid state
        duration: Simulated seconds
        noise: Recorded measurement noise; None observes exactly

    Returns:
        The sampled solution

    Raises:
        ZenoError: If the solution jumps more than ``system.max_jumps`` times
    """
    env = system.env
    z = z0
    t = 0.0
    j = 0
    trajectory = HybridTrajectory(noise_digest=noise.digest if noise is not None else None)
    trajectory.samples.append(
        TrajectorySample(t, j, z.xi, z.q, None, env.reward(z.xi), FlowEvent.START)
    )
    trajectory.termination = _termination(env, z.xi)
    n_steps = _n_steps(env, duration)
    flows = 0
    pending: FloatArray | None = None
    while trajectory.termination is None and flows < n_steps:
        outcome = hybrid_step(system, z, noise, observation=pending)
        z = outcome.state
        if outcome.event is FlowEvent.JUMP:
            j += 1
            if j > system.max_jumps:
                raise ZenoError(
                    "Hybrid solution exceeded the jump limit", j, system.max_jumps, t
                )
            pending = outcome.observation
            logger.debug("Jump %d at t=%.3f to q=%d", j, t, z.q)
        else:
            flows += 1
            t = flows * env.dt
            pending = None
            trajectory.termination = _termination(env, z.xi)
        trajectory.samples.append(
            TrajectorySample(t, j, z.xi, z.q, outcome.action, env.reward(z.xi), outcome.event)
        )
    return trajectory


def simulate_policy(
    env: ControlEnv,
    policy: Policy,
    xi0: FloatArray | Sequence[float],
    duration: float,
    noise: NoiseStream | None = None,
) -> HybridTrajectory:
    """Simulate a plain policy under the same measurement model as :func:`solve`."""

    xi = as_states(xi0).copy()
    trajectory = HybridTrajectory(noise_digest=noise.digest if noise is not None else None)
    trajectory.samples.append(
        TrajectorySample(0.0, 0, xi, None, None, env.reward(xi), FlowEvent.START)
    )
    trajectory.termination = _termination(env, xi)
    n_steps = _n_steps(env, duration)
    for k in range(n_steps):
        if trajectory.termination is not None:
            break
        action = policy.act(env.observe(xi, noise))
        xi = env.advance(xi[None, :], np.array([action]))[0]
        trajectory.termination = _termination(env, xi)
        trajectory.samples.append(
            TrajectorySample(
                (k + 1) * env.dt, 0, xi, None, action, env.reward(xi), FlowEvent.FLOW
            )
        )
    return trajectory


def travel_direction(env: ControlEnv, trajectory: HybridTrajectory) -> int:
    """Side the solution travelled toward: 0 or 1, or ``NO_SIDE`` when undecided."""

    states = trajectory.states[:, None, :]
    code = int(env.termination_codes(states[-1])[0])
    return int(env.separation(states, np.array([code]))[0])
