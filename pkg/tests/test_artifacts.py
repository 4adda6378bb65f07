"""Tests for artifact persistence."""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
import pytest

from hybridrl import (
    AngularGrid,
    ArtifactFormatError,
    ArtifactNotFoundError,
    BoxGrid,
    CriticalSet,
    HybridState,
    QPolicy,
    Region,
    assemble,
    solve,
)
from hybridrl.artifacts import (
    ArtifactLayout,
    load_critical,
    load_hybrid,
    load_policy,
    load_region,
    read_json,
    save_critical,
    save_hybrid,
    save_policy,
    save_region,
    save_trajectory,
)
from hybridrl.envs import ObstacleEnv, UnitCircleEnv
from hybridrl.nn import Mlp
from hybridrl.policies import GaussianPolicy

from .conftest import linear_gaussian

ACTIONS = (-1.0, -0.5, 0.0, 0.5, 1.0)


class TestPolicies:
    """Policy files."""

    def test_q_policy_round_trip(self, tmp_path: Path) -> None:
        policy = QPolicy(Mlp([2, 8, 5], seed=1), ACTIONS)
        path = tmp_path / "policy.json"
        observations = np.random.default_rng(0).uniform(-1.0, 1.0, size=(50, 2))

        save_policy(path, policy, "obstacle", {"seed": 1})
        loaded = load_policy(path, "obstacle")

        assert isinstance(loaded, QPolicy)
        np.testing.assert_array_equal(
            loaded.act_batch(observations), policy.act_batch(observations)
        )
        assert read_json(path, "policy")["metadata"] == {"seed": 1}

    def test_gaussian_policy_round_trip(self, tmp_path: Path) -> None:
        policy = linear_gaussian(gain=3.0)
        path = tmp_path / "policy.json"

        save_policy(path, policy, "unit-circle")
        loaded = load_policy(path)

        assert isinstance(loaded, GaussianPolicy)
        assert loaded.act([0.0, 0.1]) == pytest.approx(-0.3)
        assert loaded.value_net is None

    def test_environment_must_match(self, tmp_path: Path) -> None:
        path = tmp_path / "policy.json"
        save_policy(path, linear_gaussian(), "unit-circle")

        with pytest.raises(ArtifactFormatError) as exc_info:
            load_policy(path, "obstacle")

        assert exc_info.value.path == "$.environment"

    def test_missing_file(self, tmp_path: Path) -> None:
        with pytest.raises(ArtifactNotFoundError) as exc_info:
            load_policy(tmp_path / "absent.json")

        assert exc_info.value.kind == "policy"
        assert isinstance(exc_info.value, FileNotFoundError)
        assert "absent.json" in str(exc_info.value)

    def test_invalid_json(self, tmp_path: Path) -> None:
        path = tmp_path / "policy.json"
        path.write_text("{not json", encoding="utf-8")

        with pytest.raises(ArtifactFormatError) as exc_info:
            load_policy(path)

        assert exc_info.value.path == "$"

    def test_wrong_weight_shape_names_the_layer(self, tmp_path: Path) -> None:
        path = tmp_path / "policy.json"
        save_policy(path, QPolicy(Mlp([2, 4, 5], seed=0), ACTIONS), "obstacle")
        payload = json.loads(path.read_text(encoding="utf-8"))
        payload["networks"]["q"]["weights"][0] = [[0.0] * 4]
        path.write_text(json.dumps(payload), encoding="utf-8")

        with pytest.raises(ArtifactFormatError) as exc_info:
            load_policy(path)

        assert exc_info.value.path == "$.networks.q.weights[0]"

    def test_wrong_format_tag(self, tmp_path: Path) -> None:
        path = tmp_path / "region.json"
        save_region(path, Region.full(AngularGrid(8)))

        with pytest.raises(ArtifactFormatError) as exc_info:
            load_policy(path)

        assert exc_info.value.path == "$.format"


class TestRegions:
    """Region files."""

    def test_box_region_round_trip(self, tmp_path: Path) -> None:
        grid = BoxGrid((0.0, 3.0), (-1.5, 1.5), 0.1)
        region = Region.from_predicate(grid, lambda c: np.abs(c[:, 1]) < c[:, 0] / 3.0, "wedge")
        path = tmp_path / "region.json"

        save_region(path, region)
        loaded = load_region(path)

        assert loaded == region
        assert loaded.name == "wedge"

    def test_labels_must_cover_grid(self, tmp_path: Path) -> None:
        path = tmp_path / "region.json"
        save_region(path, Region.full(AngularGrid(8)))
        payload = json.loads(path.read_text(encoding="utf-8"))
        payload["labels"] = [[1, 3]]
        path.write_text(json.dumps(payload), encoding="utf-8")

        with pytest.raises(ArtifactFormatError) as exc_info:
            load_region(path)

        assert exc_info.value.path == "$.labels"

    def test_unknown_grid_kind(self, tmp_path: Path) -> None:
        path = tmp_path / "region.json"
        save_region(path, Region.full(AngularGrid(8)))
        payload = json.loads(path.read_text(encoding="utf-8"))
        payload["grid"]["kind"] = "hexagonal"
        path.write_text(json.dumps(payload), encoding="utf-8")

        with pytest.raises(ArtifactFormatError) as exc_info:
            load_region(path)

        assert exc_info.value.path == "$.grid.kind"


def test_critical_set_round_trip(tmp_path: Path, circle: UnitCircleEnv) -> None:
    grid = AngularGrid(20)
    witnesses = {9: (circle.state_at(math.pi - 0.05), circle.state_at(math.pi + 0.05))}
    critical = CriticalSet(Region.from_cells(grid, [9, 10], "M*"), witnesses, 0.05, 2.0)
    path = tmp_path / "critical.json"

    save_critical(path, critical, {"seed": 0})
    loaded = load_critical(path)

    assert loaded.region == critical.region
    assert loaded.probe_radius == 0.05
    assert loaded.divergence_horizon == 2.0
    np.testing.assert_array_equal(loaded.witnesses[9][1], witnesses[9][1])
    assert loaded.center_sides is None


def test_critical_set_keeps_center_sides(tmp_path: Path) -> None:
    grid = AngularGrid(20)
    sides = np.array([-1] + [0] * 9 + [1] * 9 + [-1])
    critical = CriticalSet(Region.from_cells(grid, [9, 10], "M*"), {}, 0.05, 2.0, sides)
    path = tmp_path / "critical.json"

    save_critical(path, critical)
    loaded = load_critical(path)

    assert loaded.center_sides is not None
    np.testing.assert_array_equal(loaded.center_sides, sides)


class TestHybrid:
    """Hybrid system manifests."""

    def test_round_trip(
        self, tmp_path: Path, circle: UnitCircleEnv, circle_regions: tuple[Region, Region]
    ) -> None:
        system = assemble(circle, linear_gaussian(), linear_gaussian(2.0), *circle_regions)
        layout = ArtifactLayout(tmp_path)

        manifest = save_hybrid(layout, system, {"seed": 3})
        loaded = load_hybrid(layout.hybrid, circle)

        assert manifest["policies"] == ["step6_policy_0.json", "step6_policy_1.json"]
        assert manifest["regions"] == ["step5_extended_0.json", "step5_extended_1.json"]
        assert manifest["overlap_width"] == pytest.approx(system.overlap_width)
        assert loaded.regions == system.regions
        assert loaded.max_jumps == system.max_jumps
        state = circle.state_at(math.pi + 0.1)
        assert loaded.policies[1].act(state) == pytest.approx(system.policies[1].act(state))
        z0 = HybridState(circle.state_at(math.pi), 0)
        assert solve(loaded, z0, 2.0).states.tolist() == solve(system, z0, 2.0).states.tolist()

    def test_environment_must_match(
        self,
        tmp_path: Path,
        circle: UnitCircleEnv,
        obstacle: ObstacleEnv,
        circle_regions: tuple[Region, Region],
    ) -> None:
        system = assemble(circle, linear_gaussian(), linear_gaussian(), *circle_regions)
        layout = ArtifactLayout(tmp_path)
        save_hybrid(layout, system)

        with pytest.raises(ArtifactFormatError) as exc_info:
            load_hybrid(layout.hybrid, obstacle)

        assert exc_info.value.path == "$.environment"

    def test_missing_region_file(
        self, tmp_path: Path, circle: UnitCircleEnv, circle_regions: tuple[Region, Region]
    ) -> None:
        system = assemble(circle, linear_gaussian(), linear_gaussian(), *circle_regions)
        layout = ArtifactLayout(tmp_path)
        save_hybrid(layout, system)
        layout.extended(1).unlink()

        with pytest.raises(ArtifactNotFoundError):
            load_hybrid(layout.hybrid, circle)


def test_trajectory_writes_csv_and_manifest(tmp_path: Path, circle: UnitCircleEnv) -> None:
    system = assemble(
        circle,
        linear_gaussian(),
        linear_gaussian(),
        Region.full(AngularGrid(16)),
        Region.full(AngularGrid(16)),
    )
    trajectory = solve(system, HybridState(circle.state_at(1.0), 0), 3.0)
    path = tmp_path / "runs" / "ic0.csv"

    save_trajectory(path, trajectory)

    assert path.is_file()
    manifest = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
    assert manifest["termination"] == "reached_setpoint"
    assert manifest["samples"] == len(trajectory.samples)
