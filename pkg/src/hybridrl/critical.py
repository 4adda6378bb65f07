"""Critical-set detection and partitioning of the state space."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .config import CriticalConfig
from .envs import NO_SIDE, ControlEnv
from .exceptions import NoCriticalPointsError, UnsupportedTopologyError
from .models import FloatArray, IntArray
from .policies import Policy, RestrictedPolicy
from .regions import Region
from .simulation import rollout

logger = logging.getLogger(__name__)


@dataclass(slots=True)
class CriticalSet:
    """Critical cells with, per cell, two probe states whose solutions separate.

    ``center_sides`` holds, for every grid cell, the side the noise-free solution from the
    cell center heads into, or ``NO_SIDE``; it labels the partitions.
    """

    region: Region
    witnesses: dict[int, tuple[FloatArray, FloatArray]] = field(default_factory=dict)
    probe_radius: float = 0.0
    divergence_horizon: float = 0.0
    center_sides: IntArray | None = None

    def verify(self, policy: Policy, env: ControlEnv, cell: int) -> bool:
        """Re-simulate the witness pair of ``cell`` and check the separation."""

        z0, z1 = self.witnesses[cell]
        n_steps = max(1, round(self.divergence_horizon / env.dt))
        result = rollout(env, policy, np.stack([z0, z1]), n_steps)
        sides = env.separation(result.states, result.codes)
        return bool(sides[0] == 0 and sides[1] == 1)


def probe_radii(grid_resolution: float, probe_radius: float) -> list[float]:
    """Probe radii ``k * h`` for ``k = 1 .. floor(rho / h)``; nested in ``rho``."""

    count = math.floor(probe_radius / grid_resolution + 1e-9)
    return [k * grid_resolution for k in range(1, count + 1)]


def probe_neighborhoods(env: ControlEnv, cfg: CriticalConfig, centers: FloatArray) -> FloatArray:
    """Probe states around every center, shape ``(N, P, 2)``; probe 0 is the center itself."""

    grid = env.make_grid(cfg.resolution)
    probes = [centers[:, None, :]]
    for radius in probe_radii(grid.resolution, cfg.probe_radius):
        probes.append(env.probe_states(centers, radius))
    return np.concatenate(probes, axis=1)  # type: ignore[no-any-return]


def probe_sides(
    policy: Policy, env: ControlEnv, cfg: CriticalConfig, states: FloatArray
) -> IntArray:
    """Separation side of every probe state ``(N, P, 2)``, shape ``(N, P)``."""

    count, per_center = states.shape[:2]
    flat = states.reshape(-1, 2)
    n_steps = max(1, round(cfg.divergence_horizon / env.dt))
    sides = np.empty(flat.shape[0], dtype=np.int64)
    for start in range(0, flat.shape[0], cfg.batch_size):
        chunk = flat[start : start + cfg.batch_size]
        result = rollout(env, policy, chunk, n_steps)
        sides[start : start + chunk.shape[0]] = env.separation(result.states, result.codes)
    return sides.reshape(count, per_center)


def detect_critical_cells(policy: Policy, env: ControlEnv, cfg: CriticalConfig) -> CriticalSet:
    """Probe every grid cell; the result may be empty."""

    grid = env.make_grid(cfg.resolution)
    centers = grid.centers()
    states = probe_neighborhoods(env, cfg, centers)
    sides = probe_sides(policy, env, cfg, states)
    has_zero = (sides == 0).any(axis=1)
    has_one = (sides == 1).any(axis=1)
    critical = has_zero & has_one
    witnesses: dict[int, tuple[FloatArray, FloatArray]] = {}
    for cell in np.flatnonzero(critical):
        first_zero = int(np.argmax(sides[cell] == 0))
        first_one = int(np.argmax(sides[cell] == 1))
        witnesses[int(cell)] = (states[cell, first_zero].copy(), states[cell, first_one].copy())
    undecided = int((sides[:, 0] == NO_SIDE).sum())
    logger.debug("%d of %d cell centers are undecided", undecided, grid.n_cells)
    region = Region(grid, critical, "M*")
    return CriticalSet(
        region, witnesses, cfg.probe_radius, cfg.divergence_horizon, sides[:, 0].copy()
    )


def find_critical_set(policy: Policy, env: ControlEnv, cfg: CriticalConfig) -> CriticalSet:
    """Find the cells near which arbitrarily close states separate under the closed loop.

    A cell is critical when, among its center and the probe states within ``probe_radius``,
    two noise-free solutions over ``divergence_horizon`` head into opposite partitions.

    Args:
        policy: Trained baseline policy
        env: Environment
        cfg: Probing parameters

    Returns:
        The critical set with witness pairs

    Raises:
        NoCriticalPointsError: If no cell is critical
    """
    result = detect_critical_cells(policy, env, cfg)
    if result.region.is_empty:
        logger.warning("No critical points found for %s", env.name)
        raise NoCriticalPointsError(
            "Policy has no critical points on the probed grid",
            n_cells=result.region.grid.n_cells,
        )
    logger.info("Critical set: %s", result.region.summary())
    return result


def partition(
    env: ControlEnv, critical: Region, sides: IntArray | None = None
) -> tuple[Region, Region]:
    """Split the state space into two connected parts overlapping exactly on ``critical``.

    Cells outside the critical set are labeled by ``sides``, the side the closed loop from
    their center heads into. Cells without a decided side fall back to the side of the reward
    symmetry line. Critical cells belong to both parts.

    Args:
        env: Environment
        critical: Critical set M*
        sides: Per-cell side labels, ``NO_SIDE`` where undecided; None uses the symmetry line

    Returns:
        ``(M0, M1)`` with ``M0 | M1 == S`` and ``M0 & M1 == critical``

    Raises:
        NoCriticalPointsError: If ``critical`` is empty
        UnsupportedTopologyError: If a side minus the critical set is not connected, or the
            critical set does not border both sides
    """
    grid = critical.grid
    if critical.is_empty:
        raise NoCriticalPointsError("Cannot partition without critical points", grid.n_cells)
    labels = env.side_of(grid.centers())
    if sides is not None:
        labels = np.where(sides == NO_SIDE, labels, sides)
    rim = critical.dilate(1)
    parts = []
    counts = []
    borders = []
    for side in (0, 1):
        own = Region(grid, (labels == side) & ~critical.mask, f"side{side}")
        counts.append(len(own.components()))
        borders.append(not rim.intersection(own).is_empty)
        parts.append(own.union(critical, f"M{side}"))
    if counts != [1, 1]:
        raise UnsupportedTopologyError(
            "Critical set does not split the space into two connected parts", counts
        )
    if not all(borders):
        raise UnsupportedTopologyError("Critical set does not border both sides", counts)
    logger.info("Partition: %s; %s", parts[0].summary(), parts[1].summary())
    return parts[0], parts[1]


def restrict_policy(policy: Policy, region: Region) -> RestrictedPolicy:
    """Restrict ``policy`` to ``region``; queries outside raise ``OutOfRegionError``."""

    return RestrictedPolicy(policy, region)
