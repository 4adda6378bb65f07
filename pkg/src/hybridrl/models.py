"""TypedDict models for persisted artifacts and shared array aliases."""

from __future__ import annotations

from typing import Any, TypedDict

from typing_extensions import NotRequired

import numpy as np
import numpy.typing as npt

FloatArray = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]
BoolArray = npt.NDArray[np.bool_]


# Networks and policies
class MlpPayload(TypedDict):
    """Serialized feedforward network.

    Attributes:
        format: Always ``"hybridrl.mlp"``
        version: Format version
        layer_dims: Layer widths, input first
        weights: Per-layer weight matrices, row-major, shape (fan_in, fan_out)
        biases: Per-layer bias vectors
    """

    format: str
    version: int
    layer_dims: list[int]
    weights: list[list[list[float]]]
    biases: list[list[float]]


class PolicyPayload(TypedDict, total=False):
    """Serialized control policy.

    Attributes:
        format: Always ``"hybridrl.policy"``
        version: Format version
        kind: ``"q"`` for greedy Q-policies, ``"gaussian"`` for Gaussian actors
        environment: Environment the policy was trained on
        action_table: Discrete action set (Q-policies)
        action_bounds: Closed action interval (Gaussian actors)
        log_std: Learned log standard deviations (Gaussian actors)
        networks: Named networks (``q``; or ``mean`` and optional ``value``)
        metadata: Configuration snapshot and training details
    """

    format: str
    version: int
    kind: str
    environment: str
    action_table: list[float]
    action_bounds: list[float]
    log_std: list[float]
    networks: dict[str, MlpPayload]
    metadata: dict[str, Any]


# Regions
class GridPayload(TypedDict, total=False):
    """Grid header of a region file.

    Attributes:
        kind: ``"angular"`` or ``"box"``
        n_cells: Number of cells (angular grids)
        x_bounds: Box x-extent (box grids)
        y_bounds: Box y-extent (box grids)
        resolution: Cell size
    """

    kind: str
    n_cells: int
    x_bounds: list[float]
    y_bounds: list[float]
    resolution: float


class RegionPayload(TypedDict, total=False):
    """Serialized region.

    Attributes:
        format: Always ``"hybridrl.region"``
        version: Format version
        name: Region label (for example ``"M0_ext"``)
        grid: Grid header
        labels: Run-length encoded membership, pairs of (value, count) in cell order
        summary: Human-readable description
        metadata: Configuration snapshot
    """

    format: str
    version: int
    name: str
    grid: GridPayload
    labels: list[list[int]]
    summary: str
    metadata: dict[str, Any]


class CriticalPayload(TypedDict, total=False):
    """Critical set with witnesses.

    Attributes:
        format: Always ``"hybridrl.critical"``
        version: Format version
        region: The critical set
        witnesses: Per-cell witness pairs ``{"cell", "z0", "z1"}``
        probe_radius: Radius used for probing
        divergence_horizon: Seconds simulated per probe
        center_sides: Per grid cell, the side the solution from the cell center heads into
        metadata: Configuration snapshot
    """

    format: str
    version: int
    region: RegionPayload
    witnesses: list[dict[str, Any]]
    probe_radius: float
    divergence_horizon: float
    center_sides: list[int]
    metadata: dict[str, Any]


# Simulation and experiments
class TrajectoryManifest(TypedDict):
    """Summary of a simulated trajectory written next to its CSV.

    Attributes:
        termination: Termination cause, or ``"duration"``
        jumps: Number of jumps
        final_state: Final continuous state
        final_q: Final logic variable (None for plain policies)
        samples: Number of rows in the CSV
    """

    termination: str
    jumps: int
    final_state: list[float]
    final_q: int | None
    samples: int


class ExperimentRowPayload(TypedDict):
    """One simulated run of a comparison.

    Attributes:
        ic: Initial state
        controller: ``"baseline"`` or ``"hybrid"``
        q0: Initial logic variable (hybrid runs)
        outcome: Classified outcome
        final_distance: Distance to the set-point at the end of the run
        jumps: Number of jumps
        trajectory: Relative path of the trajectory CSV, if written
        noise_seed: Seed of the noise sequence
        noise_digest: SHA-256 digest of the noise sequence
        dwell_violations: Pairs of consecutive jumps closer than the hysteresis bound
    """

    ic: list[float]
    controller: str
    q0: int | None
    outcome: str
    final_distance: float
    jumps: int
    trajectory: str | None
    noise_seed: int
    noise_digest: str
    dwell_violations: int


class ExperimentReportPayload(TypedDict):
    """Comparison report.

    Attributes:
        format: Always ``"hybridrl.report"``
        version: Format version
        environment: Environment name
        noise: Noise kind, magnitude, base seed and attacked boundary
        duration: Simulated seconds per run
        rows: Per-run results ordered by IC, controller, q0
        config: Configuration snapshot
    """

    format: str
    version: int
    environment: str
    noise: dict[str, Any]
    duration: float
    rows: list[ExperimentRowPayload]
    config: dict[str, Any]


class MetricsRow(TypedDict, total=False):
    """A training metrics log entry.

    Attributes:
        step: Environment steps so far
        mean_return: Mean return of recently finished episodes
        loss: Total loss of the latest update
        value_loss: Critic loss (PPO)
        entropy: Policy entropy (PPO)
        epsilon: Exploration rate (DQN)
        clip_fraction: Fraction of clipped ratios (PPO)
    """

    step: int
    mean_return: float
    loss: float
    value_loss: float
    entropy: float
    epsilon: float
    clip_fraction: float


class HybridManifest(TypedDict):
    """Assembled hybrid system on disk.

    Attributes:
        format: Always ``"hybridrl.hybrid"``
        version: Format version
        environment: Environment name
        policies: Policy files for q = 0 and q = 1
        regions: Extended region files for q = 0 and q = 1
        max_jumps: Zeno guard
        overlap_width: Width of the overlap of the extended regions across the critical set
        critical: Critical set the overlap width is measured across, when known
        metadata: Configuration snapshot
    """

    format: str
    version: int
    environment: str
    policies: list[str]
    regions: list[str]
    max_jumps: int
    overlap_width: float
    critical: NotRequired[RegionPayload]
    metadata: dict[str, Any]


class PipelineManifest(TypedDict, total=False):
    """Record of a pipeline run.

    Attributes:
        format: Always ``"hybridrl.pipeline"``
        version: Format version
        environment: Environment name
        completed_step: Last step that finished
        seeds: Seed that produced each trained policy, keyed by file name
        critical: Summary of the critical set
        partitions: Summaries of the partitions
        extended: Summaries of the extended regions
        overlap_width: Width of the overlap of the extended regions
        approach_fractions: Per partition, share of backward seeds approaching the critical set
        hybrid: File name of the hybrid manifest
        config: Configuration snapshot
    """

    format: str
    version: int
    environment: str
    completed_step: int
    seeds: dict[str, int]
    critical: str
    partitions: list[str]
    extended: list[str]
    overlap_width: float
    approach_fractions: list[float]
    hybrid: str
    config: dict[str, Any]
