"""Backward-in-time growth of the partitions into overlapping extended regions."""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .config import ExtensionConfig
from .envs import ControlEnv, as_states
from .exceptions import InsufficientOverlapError
from .models import FloatArray
from .policies import Policy
from .regions import Region

logger = logging.getLogger(__name__)


def backward_flow(
    env: ControlEnv,
    policy: Policy,
    xi: FloatArray | Sequence[float],
    *,
    action: float | None = None,
) -> FloatArray:
    """Right-hand side of the backward-in-time closed loop, ``-f(xi, pi(xi))``.

    Args:
        env: Environment
        policy: Region policy, queried with the exact state
        xi: State
        action: Use this action instead of querying the policy

    Returns:
        State derivative
    """
    state = as_states(xi)
    u = policy.act(state) if action is None else action
    return -env.flow(state, u)


@dataclass(slots=True)
class Extension:
    """An extended partition and how it was obtained."""

    region: Region  # M_i extended
    added: Region  # Cells reached outside M_i
    seeds: FloatArray  # Backward trajectory initial states
    witnesses: dict[int, tuple[int, int]] = field(default_factory=dict)  # cell -> (seed, step)
    approach_fraction: float = 1.0  # Seeds outside M* whose first backward step nears M*

    def witness_state(
        self, env: ControlEnv, policy: Policy, partition: Region, cell: int, cfg: ExtensionConfig
    ) -> FloatArray:
        """Recompute the backward trajectory stored for ``cell`` and return its state there."""

        seed, step = self.witnesses[cell]
        path = backward_trajectories(env, policy, partition, self.seeds[seed : seed + 1], cfg)
        return path[step, 0]  # type: ignore[no-any-return]


def _integration(env: ControlEnv, cfg: ExtensionConfig) -> tuple[float, int]:
    step = cfg.step if cfg.step is not None else env.dt
    return step, round(cfg.horizon / step)


def backward_trajectories(
    env: ControlEnv,
    policy: Policy,
    partition: Region,
    seeds: FloatArray,
    cfg: ExtensionConfig,
) -> FloatArray:
    """Backward Euler trajectories from ``seeds``, shape ``(K + 1, N, 2)``.

    Inside ``partition`` the policy's action is used; once a trajectory leaves it, the last
    action taken inside is held. Trajectories leaving the constraint set are frozen.
    """
    step, n_steps = _integration(env, cfg)
    current = as_states(seeds).reshape(-1, 2).copy()
    path = np.empty((n_steps + 1, current.shape[0], 2))
    path[0] = current
    held = np.zeros(current.shape[0])
    inside = partition.contains_many(current)
    if inside.any():
        held[inside] = policy.act_batch(current[inside])
    alive = np.ones(current.shape[0], dtype=bool)
    for k in range(n_steps):
        inside = partition.contains_many(current) & alive
        if inside.any():
            held[inside] = policy.act_batch(current[inside])
        moved = env.project(current - step * env._flow(current, held))
        alive &= env.in_domain(moved)
        current = np.where(alive[:, None], moved, current)
        path[k + 1] = current
    return path


def _rasterize(path: FloatArray, resolution: float) -> tuple[FloatArray, np.ndarray]:
    """Points along each segment spaced at most half a cell apart, with their step index."""

    lengths = np.linalg.norm(np.diff(path, axis=0), axis=-1)
    longest = float(lengths.max()) if lengths.size else 0.0
    pieces = max(1, math.ceil(longest / (resolution / 2.0)))
    fractions = np.arange(pieces) / pieces
    starts, ends = path[:-1], path[1:]
    points = starts[:, None] + fractions[None, :, None, None] * (ends - starts)[:, None]
    steps = np.broadcast_to(np.arange(path.shape[0] - 1)[:, None, None], points.shape[:3])
    points = np.concatenate([points.reshape(-1, *path.shape[1:]), path[-1:]], axis=0)
    steps = np.concatenate(
        [steps.reshape(-1, path.shape[1]), np.full((1, path.shape[1]), path.shape[0] - 1)]
    )
    return points, steps


def seed_band(partition: Region, critical: Region, rings: int = 1) -> Region:
    """Critical cells plus ``rings`` of their neighbors inside ``partition``."""

    band = critical.dilate(rings).intersection(partition)
    return band.union(critical, f"seeds({partition.name})")


def _distance_to(states: FloatArray, targets: FloatArray) -> FloatArray:
    gaps = np.linalg.norm(states[:, None, :] - targets[None, :, :], axis=-1)
    return gaps.min(axis=1)  # type: ignore[no-any-return]


def trace_extension(
    env: ControlEnv,
    policy: Policy,
    partition: Region,
    critical: Region,
    cfg: ExtensionConfig,
) -> Extension:
    """Extend ``partition`` by the cells its backward closed loop reaches from near M*.

    Args:
        env: Environment
        policy: Policy of this partition (may be region-restricted)
        partition: Partition M_i
        critical: Critical set M*
        cfg: Extension parameters

    Returns:
        The extension, with witnesses for every added cell
    """
    seeds = seed_band(partition, critical, cfg.seed_band).centers()
    path = backward_trajectories(env, policy, partition, seeds, cfg)
    points, steps = _rasterize(path, partition.grid.resolution)
    cells = partition.grid.cell_of(points)
    visited = ~partition.mask[cells] & env.in_domain(points.reshape(-1, 2)).reshape(cells.shape)

    added = np.zeros(partition.grid.n_cells, dtype=bool)
    witnesses: dict[int, tuple[int, int]] = {}
    # Row-major scan keeps the earliest step, then the lowest seed index, per cell.
    for row, seed in zip(*np.nonzero(visited)):
        cell = int(cells[row, seed])
        if not added[cell]:
            added[cell] = True
            witnesses[cell] = (int(seed), int(steps[row, seed]))
    extra = Region(partition.grid, added, f"X({partition.name})")

    approach = 1.0
    outside = ~critical.contains_many(seeds)
    if path.shape[0] > 1 and outside.any():
        targets = critical.centers()
        before = _distance_to(path[0][outside], targets)
        after = _distance_to(path[1][outside], targets)
        approach = float(np.mean(after <= before + 1e-12))
    logger.info(
        "Extended %s by %d cells; %.0f%% of backward seeds approach M*",
        partition.name,
        extra.size,
        100.0 * approach,
    )
    return Extension(
        partition.union(extra, f"{partition.name}_ext"), extra, seeds, witnesses, approach
    )


def extend_region(
    env: ControlEnv,
    policy: Policy,
    partition: Region,
    critical: Region,
    cfg: ExtensionConfig,
) -> Region:
    """Return ``M_i | X_i``, where ``X_i`` holds the cells outside ``M_i`` visited by backward
    trajectories of duration ``cfg.horizon`` started around the critical set."""

    return trace_extension(env, policy, partition, critical, cfg).region


def overlap_width(first: Region, second: Region, critical: Region | None = None) -> float:
    """Minimal transversal thickness of the intersection; zero when it is empty.

    With ``critical``, the thickness is taken on every transversal line the critical set
    crosses, and a line where the regions do not overlap around it counts as zero.
    """
    return first.intersection(second).transversal_width(critical)


def extend_partitions(
    env: ControlEnv,
    policies: tuple[Policy, Policy],
    partitions: tuple[Region, Region],
    critical: Region,
    cfg: ExtensionConfig,
) -> tuple[Extension, Extension, float]:
    """Extend both partitions and check that their overlap absorbs the noise bound.

    Raises:
        InsufficientOverlapError: If the overlap width is below ``cfg.min_overlap``
    """
    first = trace_extension(env, policies[0], partitions[0], critical, cfg)
    second = trace_extension(env, policies[1], partitions[1], critical, cfg)
    width = overlap_width(first.region, second.region, critical)
    logger.info("Overlap width %.4f (required %.4f)", width, cfg.min_overlap)
    if width < cfg.min_overlap:
        raise InsufficientOverlapError(
            "Extended regions overlap too little",
            width=width,
            required=cfg.min_overlap,
            horizon=cfg.horizon,
        )
    return first, second, width
