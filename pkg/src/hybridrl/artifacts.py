"""Reading and writing pipeline artifacts.

Every artifact is a JSON document with a ``format`` tag and a ``version``. Extraction
helpers check the fields they need and raise :class:`ArtifactFormatError` naming the path
of the first missing or malformed field.
"""

from __future__ import annotations

import json
import logging
from collections.abc import Mapping
from dataclasses import dataclass
from pathlib import Path
from typing import Any, cast

import numpy as np

from .critical import CriticalSet
from .envs import ControlEnv
from .exceptions import ArtifactFormatError, ArtifactNotFoundError
from .hybrid import HybridSystem, HybridTrajectory, assemble
from .models import (
    CriticalPayload,
    GridPayload,
    HybridManifest,
    MlpPayload,
    PolicyPayload,
    RegionPayload,
)
from .nn import MLP_FORMAT, Mlp
from .policies import POLICY_FORMAT, GaussianPolicy, Policy, QPolicy, policy_to_payload
from .regions import REGION_FORMAT, Region, decode_labels, grid_from_payload

logger = logging.getLogger(__name__)

CRITICAL_FORMAT = "hybridrl.critical"
HYBRID_FORMAT = "hybridrl.hybrid"
PIPELINE_FORMAT = "hybridrl.pipeline"
ARTIFACT_VERSION = 1


@dataclass(frozen=True, slots=True)
class ArtifactLayout:
    """File names of a pipeline run below ``root``."""

    root: Path

    @property
    def config(self) -> Path:
        return self.root / "config.yaml"

    @property
    def baseline_policy(self) -> Path:
        return self.root / "step1_policy.json"

    @property
    def baseline_metrics(self) -> Path:
        return self.root / "step1_metrics.csv"

    @property
    def critical(self) -> Path:
        return self.root / "step2_critical.json"

    def partition(self, index: int) -> Path:
        return self.root / f"step3_partition_{index}.json"

    def extended(self, index: int) -> Path:
        return self.root / f"step5_extended_{index}.json"

    def region_policy(self, index: int) -> Path:
        return self.root / f"step6_policy_{index}.json"

    def region_metrics(self, index: int) -> Path:
        return self.root / f"step6_metrics_{index}.csv"

    @property
    def hybrid(self) -> Path:
        return self.root / "step7_hybrid.json"

    @property
    def pipeline(self) -> Path:
        return self.root / "pipeline.json"

    @property
    def experiments(self) -> Path:
        return self.root / "experiments"

    @property
    def policy_map(self) -> Path:
        return self.root / "policy_map.csv"


# Raw JSON
def write_json(path: Path, payload: Mapping[str, Any]) -> None:
    """Write ``payload`` as indented JSON; floats keep full precision."""

    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    logger.debug("Wrote %s", path)


def read_json(path: Path, kind: str) -> dict[str, Any]:
    """Read a JSON object.

    Raises:
        ArtifactNotFoundError: If the file does not exist
        ArtifactFormatError: If the file is not a JSON object
    """
    if not path.is_file():
        raise ArtifactNotFoundError(path, kind)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ArtifactFormatError(f"Invalid JSON in {path.name}: {e.msg}", path="$") from e
    if not isinstance(data, dict):
        raise ArtifactFormatError("Artifact must be a JSON object", path="$", payload=data)
    return data


def _field(payload: Mapping[str, Any], key: str, path: str) -> Any:
    value = payload.get(key)
    if value is None:
        raise ArtifactFormatError(
            f"Missing '{key}' field in artifact",
            path=f"{path}.{key}",
            payload=payload,
        )
    return value


def _check_format(payload: Mapping[str, Any], expected: str, path: str = "$") -> None:
    found = _field(payload, "format", path)
    if found != expected:
        raise ArtifactFormatError(
            f"Expected a {expected!r} artifact, found {found!r}",
            path=f"{path}.format",
            payload=payload,
        )
    version = _field(payload, "version", path)
    if version != ARTIFACT_VERSION:
        raise ArtifactFormatError(
            f"Unsupported {expected} version {version!r}",
            path=f"{path}.version",
            payload=payload,
        )


# Networks and policies
def extract_mlp(payload: Mapping[str, Any], path: str = "$") -> MlpPayload:
    """Validate a serialized network.

    Raises:
        ArtifactFormatError: If a field is missing or the layer shapes disagree
    """
    _check_format(payload, MLP_FORMAT, path)
    dims = _field(payload, "layer_dims", path)
    weights = _field(payload, "weights", path)
    biases = _field(payload, "biases", path)
    if not isinstance(dims, list) or len(dims) < 2:
        raise ArtifactFormatError(
            "Network needs at least two layer widths", path=f"{path}.layer_dims", payload=dims
        )
    if len(weights) != len(dims) - 1 or len(biases) != len(dims) - 1:
        raise ArtifactFormatError(
            "Layer count does not match layer_dims", path=f"{path}.weights", payload=dims
        )
    for index, (fan_in, fan_out) in enumerate(zip(dims, dims[1:])):
        if np.shape(weights[index]) != (fan_in, fan_out):
            raise ArtifactFormatError(
                f"Weight {index} has shape {np.shape(weights[index])}, "
                f"expected {(fan_in, fan_out)}",
                path=f"{path}.weights[{index}]",
            )
        if np.shape(biases[index]) != (fan_out,):
            raise ArtifactFormatError(
                f"Bias {index} has shape {np.shape(biases[index])}, expected {(fan_out,)}",
                path=f"{path}.biases[{index}]",
            )
    return cast(MlpPayload, payload)


def policy_from_payload(payload: Mapping[str, Any]) -> Policy:
    """Rebuild a Q-policy or Gaussian policy.

    Raises:
        ArtifactFormatError: If the payload is malformed
    """
    _check_format(payload, POLICY_FORMAT)
    kind = _field(payload, "kind", "$")
    networks = _field(payload, "networks", "$")
    if kind == QPolicy.kind:
        q_net = Mlp.from_payload(extract_mlp(_field(networks, "q", "$.networks"), "$.networks.q"))
        table = _field(payload, "action_table", "$")
        if len(table) != q_net.output_dim:
            raise ArtifactFormatError(
                "Action table does not match the Q-network outputs",
                path="$.action_table",
                payload=table,
            )
        return QPolicy(q_net, table)
    if kind == GaussianPolicy.kind:
        mean = extract_mlp(_field(networks, "mean", "$.networks"), "$.networks.mean")
        value = networks.get("value")
        bounds = _field(payload, "action_bounds", "$")
        return GaussianPolicy(
            Mlp.from_payload(mean),
            _field(payload, "log_std", "$"),
            (float(bounds[0]), float(bounds[1])),
            value_net=(
                Mlp.from_payload(extract_mlp(value, "$.networks.value"))
                if value is not None
                else None
            ),
        )
    raise ArtifactFormatError(f"Unknown policy kind {kind!r}", path="$.kind", payload=payload)


def save_policy(
    path: Path, policy: Policy, environment: str, metadata: dict[str, Any] | None = None
) -> None:
    write_json(path, policy_to_payload(policy, environment, metadata))


def load_policy(path: Path, environment: str | None = None) -> Policy:
    """Load a policy file, optionally checking the environment it was trained on."""

    payload = cast(PolicyPayload, read_json(path, "policy"))
    policy = policy_from_payload(payload)
    found = payload.get("environment")
    if environment is not None and found != environment:
        raise ArtifactFormatError(
            f"Policy was trained on {found!r}, not {environment!r}", path="$.environment"
        )
    return policy


# Regions
def region_from_payload(payload: Mapping[str, Any], path: str = "$") -> Region:
    """Rebuild a region from its payload."""

    _check_format(payload, REGION_FORMAT, path)
    grid_payload = cast(GridPayload, _field(payload, "grid", path))
    kind = _field(grid_payload, "kind", f"{path}.grid")
    if kind not in ("angular", "box"):
        raise ArtifactFormatError(
            f"Unknown grid kind {kind!r}", path=f"{path}.grid.kind", payload=grid_payload
        )
    try:
        grid = grid_from_payload(grid_payload)
        mask = decode_labels(_field(payload, "labels", path), grid.n_cells)
    except (KeyError, TypeError, ValueError) as e:
        raise ArtifactFormatError(
            f"Malformed region: {e}", path=f"{path}.labels", payload=payload.get("name")
        ) from e
    return Region(grid, mask, str(payload.get("name", "region")))


def save_region(path: Path, region: Region, metadata: dict[str, Any] | None = None) -> None:
    write_json(path, region.to_payload(metadata))


def load_region(path: Path) -> Region:
    return region_from_payload(cast(RegionPayload, read_json(path, "region")))


# Critical sets
def critical_to_payload(
    critical: CriticalSet, metadata: dict[str, Any] | None = None
) -> CriticalPayload:
    payload: CriticalPayload = {
        "format": CRITICAL_FORMAT,
        "version": ARTIFACT_VERSION,
        "region": critical.region.to_payload(),
        "witnesses": [
            {"cell": cell, "z0": z0.tolist(), "z1": z1.tolist()}
            for cell, (z0, z1) in sorted(critical.witnesses.items())
        ],
        "probe_radius": critical.probe_radius,
        "divergence_horizon": critical.divergence_horizon,
    }
    if critical.center_sides is not None:
        payload["center_sides"] = critical.center_sides.tolist()
    if metadata is not None:
        payload["metadata"] = metadata
    return payload


def critical_from_payload(payload: Mapping[str, Any]) -> CriticalSet:
    _check_format(payload, CRITICAL_FORMAT)
    region = region_from_payload(_field(payload, "region", "$"), "$.region")
    sides = payload.get("center_sides")
    witnesses = {}
    for index, entry in enumerate(payload.get("witnesses", [])):
        where = f"$.witnesses[{index}]"
        witnesses[int(_field(entry, "cell", where))] = (
            np.asarray(_field(entry, "z0", where), dtype=np.float64),
            np.asarray(_field(entry, "z1", where), dtype=np.float64),
        )
    return CriticalSet(
        region,
        witnesses,
        float(payload.get("probe_radius", 0.0)),
        float(payload.get("divergence_horizon", 0.0)),
        None if sides is None else np.asarray(sides, dtype=np.int64),
    )


def save_critical(
    path: Path, critical: CriticalSet, metadata: dict[str, Any] | None = None
) -> None:
    write_json(path, critical_to_payload(critical, metadata))


def load_critical(path: Path) -> CriticalSet:
    return critical_from_payload(read_json(path, "critical set"))


# Hybrid systems
def save_hybrid(
    layout: ArtifactLayout,
    system: HybridSystem,
    metadata: dict[str, Any] | None = None,
) -> HybridManifest:
    """Write the region policies, extended regions and the hybrid manifest.

    Returns:
        The manifest written to ``layout.hybrid``
    """
    for q in (0, 1):
        save_policy(layout.region_policy(q), system.policies[q], system.env.name, metadata)
        save_region(layout.extended(q), system.regions[q].renamed(f"M{q}_ext"), metadata)
    manifest: HybridManifest = {
        "format": HYBRID_FORMAT,
        "version": ARTIFACT_VERSION,
        "environment": system.env.name,
        "policies": [layout.region_policy(q).name for q in (0, 1)],
        "regions": [layout.extended(q).name for q in (0, 1)],
        "max_jumps": system.max_jumps,
        "overlap_width": system.overlap_width,
        "metadata": metadata or {},
    }
    if system.critical is not None:
        manifest["critical"] = system.critical.to_payload()
    write_json(layout.hybrid, manifest)
    return manifest


def load_hybrid(path: Path, env: ControlEnv) -> HybridSystem:
    """Load a hybrid manifest and the files it references (relative to its directory).

    Raises:
        ArtifactNotFoundError: If the manifest or a referenced file is missing
        ArtifactFormatError: If the manifest is malformed or built for another environment
        CoverageError: If the stored regions do not cover the state space
    """
    manifest = read_json(path, "hybrid system")
    _check_format(manifest, HYBRID_FORMAT)
    environment = _field(manifest, "environment", "$")
    if environment != env.name:
        raise ArtifactFormatError(
            f"Hybrid system was built for {environment!r}, not {env.name!r}",
            path="$.environment",
        )
    policy_files = _field(manifest, "policies", "$")
    region_files = _field(manifest, "regions", "$")
    if len(policy_files) != 2 or len(region_files) != 2:
        raise ArtifactFormatError(
            "Hybrid system needs exactly two policies and two regions",
            path="$.policies",
            payload=manifest,
        )
    policies = [load_policy(path.parent / name, env.name) for name in policy_files]
    regions = [load_region(path.parent / name) for name in region_files]
    critical = manifest.get("critical")
    return assemble(
        env,
        policies[0],
        policies[1],
        regions[0],
        regions[1],
        max_jumps=int(manifest.get("max_jumps", 100)),
        critical=None if critical is None else region_from_payload(critical, "$.critical"),
    )


# Trajectories
def save_trajectory(path: Path, trajectory: HybridTrajectory) -> None:
    """Write ``path`` (CSV) and its manifest next to it (same name, ``.json``)."""

    trajectory.write_csv(path)
    write_json(path.with_suffix(".json"), trajectory.manifest())
