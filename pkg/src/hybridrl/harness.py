"""Closed-loop experiments: baseline versus hybrid under identical recorded noise."""

from __future__ import annotations

import asyncio
import csv
import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np

from .config import OBSTACLE, UNIT_CIRCLE, StuckConfig
from .envs import NO_SIDE, ControlEnv, TerminationCause, UnitCircleEnv, as_states
from .exceptions import ConfigError
from .hybrid import (
    HybridState,
    HybridSystem,
    HybridTrajectory,
    simulate_policy,
    solve,
    travel_direction,
)
from .models import ExperimentReportPayload, ExperimentRowPayload, FloatArray
from .noise import NoiseKind, NoiseModel, NoiseStream
from .policies import Policy
from .regions import Grid, Region

logger = logging.getLogger(__name__)

BASELINE = "baseline"
HYBRID = "hybrid"
REPORT_FORMAT = "hybridrl.report"
REPORT_VERSION = 1


# Initial-condition fixtures
def _circle_states(fractions: Sequence[float]) -> FloatArray:
    return np.array([UnitCircleEnv.state_at(f * math.pi) for f in fractions])


def benchmark_initial_states(environment: str) -> FloatArray:
    """Initial conditions of the baseline-versus-hybrid comparison."""

    if environment == UNIT_CIRCLE:
        return _circle_states([0.75, 0.9, 1.0, 1.1, 1.25])
    if environment == OBSTACLE:
        return np.array([[0.0, -0.15], [0.0, -0.055], [0.0, 0.0], [0.0, 0.055], [0.0, 0.15]])
    raise ConfigError("Unknown environment", key="environment", value=environment)


def motivating_initial_states(environment: str) -> FloatArray:
    """Initial conditions showing the baseline failure."""

    if environment == UNIT_CIRCLE:
        return np.array([[-0.81, 0.59], [-0.95, -0.31], [-1.0, 0.0]])
    if environment == OBSTACLE:
        return np.array([[0.0, 0.15], [0.0, 0.0], [0.0, -0.15]])
    raise ConfigError("Unknown environment", key="environment", value=environment)


def overlap_initial_states(environment: str) -> FloatArray:
    """Initial conditions inside the overlap of the extended regions."""

    if environment == UNIT_CIRCLE:
        return _circle_states([0.9, 1.1])
    if environment == OBSTACLE:
        return np.array([[0.0, -0.055], [0.0, 0.055]])
    raise ConfigError("Unknown environment", key="environment", value=environment)


# Outcomes
class Outcome(str, Enum):
    """Classified result of a simulated run."""

    REACHED = "reached"
    STUCK = "stuck"
    CRASHED = "crashed"
    LEFT_DOMAIN = "left_domain"
    UNRESOLVED = "unresolved"


@dataclass(frozen=True, slots=True)
class StuckCriterion:
    """A run is stuck when it did not terminate and its distance to the set-point varied by
    less than ``threshold`` over the final ``window`` seconds."""

    window: float = 2.0
    threshold: float = 0.05

    def __post_init__(self) -> None:
        if self.window <= 0 or self.threshold <= 0:
            raise ConfigError(
                "Stuck window and threshold must be positive",
                key="harness.stuck",
                value=(self.window, self.threshold),
            )

    @classmethod
    def from_config(cls, config: StuckConfig) -> StuckCriterion:
        return cls(config.window, config.threshold)

    def is_stuck(self, env: ControlEnv, trajectory: HybridTrajectory) -> bool:
        if trajectory.termination is not None:
            return False
        times = trajectory.times
        end = float(times[-1])
        if end < self.window - 1e-9:
            return False
        distances = env.distance_to_setpoint(trajectory.states[times >= end - self.window - 1e-9])
        return float(distances.max() - distances.min()) < self.threshold


def classify(env: ControlEnv, trajectory: HybridTrajectory, stuck: StuckCriterion) -> Outcome:
    """Crashed, reached, stuck, left the domain, or unresolved, checked in that order."""

    if trajectory.termination is TerminationCause.CRASHED:
        return Outcome.CRASHED
    if trajectory.termination is TerminationCause.REACHED_SETPOINT:
        return Outcome.REACHED
    if stuck.is_stuck(env, trajectory):
        return Outcome.STUCK
    if trajectory.termination is TerminationCause.LEFT_DOMAIN:
        return Outcome.LEFT_DOMAIN
    return Outcome.UNRESOLVED


def dwell_violations(
    system: HybridSystem, trajectory: HybridTrajectory, noise_magnitude: float = 0.0
) -> list[float]:
    """Transverse travel between consecutive jumps that falls short of the hysteresis bound.

    The bound is ``system.overlap_width - 2 * noise_magnitude``; an empty list means every
    pair of consecutive jumps respected it.
    """
    bound = system.overlap_width - 2.0 * noise_magnitude
    return [d for d in trajectory.dwell_distances(system.env) if d < bound - 1e-9]


# Reports
@dataclass(slots=True)
class ExperimentRow:
    """One simulated run."""

    ic_index: int
    ic: FloatArray
    controller: str
    q0: int | None
    outcome: Outcome
    final_distance: float
    jumps: int
    noise_seed: int
    noise_digest: str
    trajectory: str | None = None
    dwell_violations: int = 0

    def to_payload(self) -> ExperimentRowPayload:
        return {
            "ic": [float(v) for v in self.ic],
            "controller": self.controller,
            "q0": self.q0,
            "outcome": self.outcome.value,
            "final_distance": self.final_distance,
            "jumps": self.jumps,
            "trajectory": self.trajectory,
            "noise_seed": self.noise_seed,
            "noise_digest": self.noise_digest,
            "dwell_violations": self.dwell_violations,
        }


@dataclass(slots=True)
class ExperimentReport:
    """Outcomes of a comparison, ordered by initial condition, controller and q0."""

    environment: str
    noise: NoiseModel
    duration: float
    rows: list[ExperimentRow] = field(default_factory=list)
    config: dict[str, Any] = field(default_factory=dict)

    def outcome(self, ic_index: int, controller: str, q0: int | None = None) -> Outcome:
        """Outcome of one run.

        Raises:
            KeyError: If no such run exists
        """
        for row in self.rows:
            if row.ic_index == ic_index and row.controller == controller and row.q0 == q0:
                return row.outcome
        raise KeyError((ic_index, controller, q0))

    def to_payload(self) -> ExperimentReportPayload:
        return {
            "format": REPORT_FORMAT,
            "version": REPORT_VERSION,
            "environment": self.environment,
            "noise": {
                "kind": self.noise.kind.value,
                "magnitude": self.noise.magnitude,
                "seed": self.noise.seed,
                "center": self.noise.center,
            },
            "duration": self.duration,
            "rows": [row.to_payload() for row in self.rows],
            "config": self.config,
        }

    def table(self) -> str:
        """Per-IC outcomes side by side."""

        columns: list[tuple[str, int | None]] = []
        for row in self.rows:
            key = (row.controller, row.q0)
            if key not in columns:
                columns.append(key)
        headers = ["ic"] + [
            controller if q0 is None else f"{controller} q0={q0}" for controller, q0 in columns
        ]
        lines = []
        for index in sorted({row.ic_index for row in self.rows}):
            ic = next(row.ic for row in self.rows if row.ic_index == index)
            cells = [f"[{ic[0]:+.3f}, {ic[1]:+.3f}]"]
            for controller, q0 in columns:
                try:
                    cells.append(self.outcome(index, controller, q0).value)
                except KeyError:
                    cells.append("-")
            lines.append(cells)
        widths = [max(len(r[i]) for r in [headers, *lines]) for i in range(len(headers))]
        rendered = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
        rendered += ["  ".join(c.ljust(w) for c, w in zip(cells, widths)) for cells in lines]
        return "\n".join(rendered)


def aim_noise(env: ControlEnv, noise: NoiseModel, critical: Region | None) -> NoiseModel:
    """Aim adversarial noise at ``critical`` unless it already has a center."""

    if noise.kind is not NoiseKind.ADVERSARIAL or noise.center is not None:
        return noise
    if critical is None or critical.is_empty:
        return noise
    aimed = noise.aimed_at(env.critical_center(critical))
    logger.info("Adversarial noise aimed at %.4f (%s)", aimed.center, critical.summary())
    return aimed


def _critical_of(system: HybridSystem | None) -> Region | None:
    return system.critical if system is not None else None


@dataclass(frozen=True, slots=True)
class _Job:
    ic_index: int
    ic: FloatArray
    controller: str
    q0: int | None
    noise: NoiseStream | None
    noise_seed: int


def _trajectory_name(job: _Job) -> str:
    suffix = "" if job.q0 is None else f"_q{job.q0}"
    return f"ic{job.ic_index}_{job.controller}{suffix}.csv"


def _run_job(
    env: ControlEnv,
    baseline: Policy,
    system: HybridSystem | None,
    job: _Job,
    duration: float,
    stuck: StuckCriterion,
    output_dir: Path | None,
) -> ExperimentRow:
    short: list[float] = []
    if job.controller == HYBRID:
        assert system is not None and job.q0 is not None
        trajectory = solve(system, HybridState(job.ic, job.q0), duration, job.noise)
        magnitude = job.noise.magnitude if job.noise is not None else 0.0
        short = dwell_violations(system, trajectory, magnitude)
        if short:
            logger.warning(
                "IC %d q0=%d: %d jumps closer than the hysteresis bound (shortest %.4f)",
                job.ic_index,
                job.q0,
                len(short),
                min(short),
            )
    else:
        trajectory = simulate_policy(env, baseline, job.ic, duration, job.noise)
    outcome = classify(env, trajectory, stuck)
    name = None
    if output_dir is not None:
        name = _trajectory_name(job)
        trajectory.write_csv(output_dir / name)
    logger.debug(
        "IC %d %s q0=%s: %s after %d jumps",
        job.ic_index,
        job.controller,
        job.q0,
        outcome.value,
        trajectory.jumps,
    )
    return ExperimentRow(
        job.ic_index,
        job.ic,
        job.controller,
        job.q0,
        outcome,
        float(env.distance_to_setpoint(trajectory.final.xi[None, :])[0]),
        trajectory.jumps,
        job.noise_seed,
        trajectory.noise_digest or "",
        name,
        len(short),
    )


async def acompare(
    env: ControlEnv,
    baseline: Policy,
    system: HybridSystem | None,
    initial_states: FloatArray | Sequence[Sequence[float]],
    noise: NoiseModel,
    duration: float,
    *,
    stuck: StuckCriterion | None = None,
    q0_values: Sequence[int] = (0, 1),
    output_dir: Path | None = None,
    max_concurrency: int = 4,
    config: dict[str, Any] | None = None,
    critical: Region | None = None,
) -> ExperimentReport:
    """Simulate the baseline and, if given, the hybrid system from every initial condition.

    Each initial condition gets one recorded noise sequence (seeded with
    ``noise.seed + index``) that every run from it consumes, so the baseline and the hybrid
    runs see byte-identical noise. Runs execute in worker threads, at most
    ``max_concurrency`` at a time; rows come back in job order. Unless ``noise`` already
    has a center, adversarial noise is aimed at ``critical`` or at the critical set of
    ``system``. Hybrid runs whose jumps come closer than the hysteresis bound are counted
    in ``dwell_violations``.

    Args:
        env: Environment
        baseline: Baseline policy
        system: Hybrid system, or None for baseline-only experiments
        initial_states: Initial conditions ``(N, 2)``
        noise: Measurement noise model
        duration: Simulated seconds per run
        stuck: Stuck criterion (defaults to 2 s / 0.05)
        q0_values: Initial logic variables of the hybrid runs
        output_dir: Directory receiving one trajectory CSV per run
        max_concurrency: Simultaneous simulations
        config: Configuration snapshot stored in the report
        critical: Critical set to aim adversarial noise at

    Returns:
        The experiment report
    """
    criterion = stuck if stuck is not None else StuckCriterion()
    noise = aim_noise(env, noise, critical if critical is not None else _critical_of(system))
    states = as_states(initial_states).reshape(-1, 2)
    n_steps = max(1, round(duration / env.dt))
    jobs: list[_Job] = []
    for index, ic in enumerate(states):
        recorded = noise.stream(n_steps, offset=index)
        seed = noise.seed + index
        jobs.append(_Job(index, ic, BASELINE, None, recorded.replay(), seed))
        if system is not None:
            for q0 in q0_values:
                jobs.append(_Job(index, ic, HYBRID, int(q0), recorded.replay(), seed))

    semaphore = asyncio.Semaphore(max_concurrency)

    async def run(job: _Job) -> ExperimentRow:
        async with semaphore:
            return await asyncio.to_thread(
                _run_job, env, baseline, system, job, duration, criterion, output_dir
            )

    rows = await asyncio.gather(*(run(job) for job in jobs))
    report = ExperimentReport(env.name, noise, duration, list(rows), config or {})
    failures = [row for row in rows if row.outcome is not Outcome.REACHED]
    logger.info(
        "Compared %d runs from %d initial conditions; %d did not reach the set-point",
        len(rows),
        states.shape[0],
        len(failures),
    )
    chattering = sum(1 for row in rows if row.dwell_violations)
    if chattering:
        logger.warning("%d hybrid runs violated the hysteresis dwell bound", chattering)
    return report


def compare(
    env: ControlEnv,
    baseline: Policy,
    system: HybridSystem | None,
    initial_states: FloatArray | Sequence[Sequence[float]],
    noise: NoiseModel,
    duration: float,
    **kwargs: Any,
) -> ExperimentReport:
    """Blocking wrapper around :func:`acompare`."""

    return asyncio.run(acompare(env, baseline, system, initial_states, noise, duration, **kwargs))


def motivate(
    env: ControlEnv,
    baseline: Policy,
    initial_states: FloatArray | Sequence[Sequence[float]],
    noise: NoiseModel,
    duration: float,
    **kwargs: Any,
) -> ExperimentReport:
    """Baseline-only runs, by default from the initial conditions that expose its failure."""

    return compare(env, baseline, None, initial_states, noise, duration, **kwargs)


@dataclass(frozen=True, slots=True)
class SidedResult:
    """Travel direction of a hybrid run relative to its initial logic variable."""

    ic: FloatArray
    q0: int
    direction: int  # Side reached: 0, 1, or NO_SIDE
    in_overlap: bool
    consistent: bool


def sided_consistency(
    system: HybridSystem,
    initial_states: FloatArray | Sequence[Sequence[float]],
    duration: float,
    *,
    q0_values: Sequence[int] = (0, 1),
    noise: NoiseModel | None = None,
) -> list[SidedResult]:
    """Check that runs started in the overlap travel toward the side selected by ``q0``.

    Outside the overlap only one flow set contains the initial state, so the direction must
    match that mode regardless of ``q0``.
    Adversarial ``noise`` is aimed at the critical set of ``system`` when it has one.
    """
    env = system.env
    if noise is not None:
        noise = aim_noise(env, noise, system.critical)
    results = []
    n_steps = max(1, round(duration / env.dt))
    for index, ic in enumerate(as_states(initial_states).reshape(-1, 2)):
        mode = system.mode_of(ic)
        for q0 in q0_values:
            stream = noise.stream(n_steps, offset=index) if noise is not None else None
            trajectory = solve(system, HybridState(ic, int(q0)), duration, stream)
            direction = travel_direction(env, trajectory)
            expected = int(q0) if mode is None else mode
            results.append(
                SidedResult(ic, int(q0), direction, mode is None, direction == expected)
            )
            if direction != expected:
                logger.warning(
                    "Run from %s with q0=%d travelled to side %s, expected %d",
                    ic.tolist(),
                    q0,
                    "none" if direction == NO_SIDE else direction,
                    expected,
                )
    return results


def policy_map(policy: Policy, grid: Grid, region: Region | None = None) -> FloatArray:
    """Deterministic action at every grid cell center, rows ``(x, y, u)``.

    Cells outside ``region`` get NaN actions.
    """
    centers = grid.centers()
    actions = np.full(centers.shape[0], np.nan)
    inside = region.mask if region is not None else np.ones(centers.shape[0], dtype=bool)
    if inside.any():
        actions[inside] = policy.act_batch(centers[inside])
    return np.column_stack([centers, actions])  # type: ignore[no-any-return]


def write_policy_map(path: Path, table: FloatArray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["x", "y", "u"])
        for x, y, u in table:
            writer.writerow([repr(float(x)), repr(float(y)), "" if np.isnan(u) else repr(float(u))])
