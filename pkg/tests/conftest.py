"""Shared fixtures: environments, hand-written controllers and small hybrid systems."""

from __future__ import annotations

import math
from collections.abc import Callable
from pathlib import Path

import numpy as np
import pytest

from hybridrl import (
    AngularGrid,
    BoxGrid,
    CriticalConfig,
    ExtensionConfig,
    GaussianPolicy,
    Policy,
    Region,
    RunConfig,
    TrainConfig,
    assemble,
    make_env,
)
from hybridrl.envs import ObstacleEnv, UnitCircleEnv
from hybridrl.hybrid import HybridSystem
from hybridrl.nn import Mlp
from hybridrl.policies import FeedbackPolicy
from hybridrl.training import MetricsLog

# 126 arcs of about 0.05 rad; pi falls on the edge between cells 62 and 63.
CIRCLE_CELLS = 126
OVERLAP_HALF_WIDTH = 0.5


def circle_bang_bang(observations: np.ndarray) -> np.ndarray:
    """Shortest-way-home steering: clockwise above the x-axis, counterclockwise below."""

    return np.where(observations[:, 1] > 0.0, -1.0, 1.0)


def constant(value: float) -> FeedbackPolicy:
    return FeedbackPolicy(lambda obs: np.full(obs.shape[0], value), name=f"u={value}")


def obstacle_sign(observations: np.ndarray) -> np.ndarray:
    """Steer away from the x-axis, with a small dead band around it."""

    y = observations[:, 1]
    return np.where(y > 0.02, 1.0, np.where(y < -0.02, -1.0, 0.0))


def obstacle_detour(side: int) -> FeedbackPolicy:
    """Climb to ``+/-0.4`` until the obstacle is behind, then return to ``y = 0``."""

    sign = 1.0 if side == 0 else -1.0

    def law(observations: np.ndarray) -> np.ndarray:
        x, y = observations[:, 0], observations[:, 1]
        target = np.where(x < 1.35, sign * 0.45, 0.0)
        return np.where(y < target - 0.075, 1.0, np.where(y > target + 0.075, -1.0, 0.0))

    return FeedbackPolicy(law, name=f"detour{side}")


def linear_gaussian(gain: float = 100.0) -> GaussianPolicy:
    """Network-backed version of the bang-bang law: ``u = clip(-gain * y)``."""

    net = Mlp.zeros([2, 1])
    net.weights[0][1, 0] = -gain
    return GaussianPolicy(net, [0.0])


def constant_gaussian() -> GaussianPolicy:
    """Network policy that always steers counterclockwise."""

    net = Mlp.zeros([2, 1])
    net.biases[0][0] = 1.0
    return GaussianPolicy(net, [0.0])


@pytest.fixture
def circle() -> UnitCircleEnv:
    env = make_env("unit-circle")
    assert isinstance(env, UnitCircleEnv)
    return env


@pytest.fixture
def obstacle() -> ObstacleEnv:
    env = make_env("obstacle")
    assert isinstance(env, ObstacleEnv)
    return env


@pytest.fixture
def circle_grid() -> AngularGrid:
    return AngularGrid(CIRCLE_CELLS)


@pytest.fixture
def circle_regions(circle_grid: AngularGrid) -> tuple[Region, Region]:
    """Two arcs overlapping on ``pi +/- 0.5``."""

    angles = circle_grid.center_angles()
    first = Region(circle_grid, angles < math.pi + OVERLAP_HALF_WIDTH, "M0_ext")
    second = Region(circle_grid, angles > math.pi - OVERLAP_HALF_WIDTH, "M1_ext")
    return first, second


@pytest.fixture
def circle_system(circle: UnitCircleEnv, circle_regions: tuple[Region, Region]) -> HybridSystem:
    """Clockwise in mode 0, counterclockwise in mode 1."""

    return assemble(circle, constant(-1.0), constant(1.0), *circle_regions)


@pytest.fixture
def obstacle_system(obstacle: ObstacleEnv) -> HybridSystem:
    """Pass above in mode 0 and below in mode 1; the regions overlap on ``|y| <= 0.15``."""

    grid = BoxGrid(obstacle.x_bounds, obstacle.y_bounds, 0.05)
    upper = Region.from_predicate(grid, lambda c: c[:, 1] >= -0.15, "M0_ext")
    lower = Region.from_predicate(grid, lambda c: c[:, 1] <= 0.15, "M1_ext")
    return assemble(obstacle, obstacle_detour(0), obstacle_detour(1), upper, lower)


@pytest.fixture
def critical_config() -> CriticalConfig:
    return CriticalConfig(resolution=0.05, probe_radius=0.05, divergence_horizon=2.0)


@pytest.fixture
def extension_config() -> ExtensionConfig:
    return ExtensionConfig(horizon=0.5, seed_band=1, min_overlap=0.1)


class FakeTraining:
    """Stands in for seed-retried training; hands out a fixed network policy."""

    def __init__(self, factory: Callable[[], Policy] = linear_gaussian) -> None:
        self.factory = factory
        self.calls: list[dict[str, object]] = []

    def __call__(
        self,
        env: object,
        cfg: TrainConfig,
        *,
        warm_start: Policy | None = None,
        total_steps: int | None = None,
        on_metrics: Callable[[int, MetricsLog], None] | None = None,
    ) -> tuple[Policy, int]:
        self.calls.append({"env": env, "warm_start": warm_start, "total_steps": total_steps})
        if on_metrics is not None:
            on_metrics(cfg.seed, MetricsLog())
        return self.factory(), cfg.seed


@pytest.fixture
def fake_training(monkeypatch: pytest.MonkeyPatch) -> FakeTraining:
    fake = FakeTraining()
    monkeypatch.setattr("hybridrl.pipeline.train_with_retries", fake)
    return fake


@pytest.fixture
def run_config(
    tmp_path: Path, critical_config: CriticalConfig, extension_config: ExtensionConfig
) -> RunConfig:
    """Unit-circle run with a coarse grid, writing below ``tmp_path``."""

    base = RunConfig.for_environment("unit-circle", seed=3)
    return base.with_overrides(
        output_dir=str(tmp_path), critical=critical_config, extend=extension_config
    )
