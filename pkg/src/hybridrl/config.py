"""Configuration for environments, training, and the hybrid design pipeline."""

from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path
from typing import Any, Literal, TypeVar

import yaml
from typing_extensions import Self

from .exceptions import ConfigError

UNIT_CIRCLE = "unit-circle"
OBSTACLE = "obstacle"
ENVIRONMENTS = (UNIT_CIRCLE, OBSTACLE)

Algorithm = Literal["dqn", "ppo"]
NoiseKindName = Literal["uniform", "adversarial"]

_T = TypeVar("_T")


def _positive(name: str, value: float) -> None:
    if not value > 0:
        raise ConfigError(f"{name} must be positive", key=name, value=value)


@dataclass(slots=True)
class EnvConfig:
    """Environment parameters shared by both benchmarks."""

    dt: float = 0.1  # Sampling time in seconds
    horizon: int = 200  # Max steps per training episode
    tolerance: float = 0.1  # Set-point reach radius
    # Obstacle geometry; ignored by the unit circle
    obstacle_x: tuple[float, float] = (0.8, 1.3)
    obstacle_y: tuple[float, float] = (-0.25, 0.25)
    x_bounds: tuple[float, float] = (0.0, 3.0)
    y_bounds: tuple[float, float] = (-1.5, 1.5)
    crash_penalty: float = 10.0
    exit_penalty: float = 5.0
    actions: tuple[float, ...] = (-1.0, -0.5, 0.0, 0.5, 1.0)  # Discrete action set (obstacle)

    def __post_init__(self) -> None:
        _positive("env.dt", self.dt)
        _positive("env.horizon", self.horizon)
        _positive("env.tolerance", self.tolerance)
        if not math.isclose(self.obstacle_y[0], -self.obstacle_y[1]):
            raise ConfigError(
                "Obstacle must be symmetric about y = 0",
                key="env.obstacle_y",
                value=self.obstacle_y,
            )

    def with_overrides(self, **overrides: object) -> Self:
        """Return a cloned config with updated fields."""

        return replace(self, **overrides)  # type: ignore[arg-type]


@dataclass(slots=True)
class DqnConfig:
    """Q-learning specific settings."""

    buffer_size: int = 50_000
    target_sync: int = 500  # Steps between target network copies
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_fraction: float = 0.5  # Fraction of training over which epsilon decays
    finetune_epsilon_start: float = 0.3  # Exploration when warm-started
    train_freq: int = 4
    learning_starts: int = 1_000
    max_grad_norm: float = 10.0

    def __post_init__(self) -> None:
        _positive("train.dqn.buffer_size", self.buffer_size)
        _positive("train.dqn.target_sync", self.target_sync)
        _positive("train.dqn.train_freq", self.train_freq)
        _positive("train.dqn.max_grad_norm", self.max_grad_norm)
        if self.learning_starts < 0:
            raise ConfigError(
                "Learning start must be non-negative",
                key="train.dqn.learning_starts",
                value=self.learning_starts,
            )
        for name in ("epsilon_start", "epsilon_end", "epsilon_fraction", "finetune_epsilon_start"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError("Must lie in [0, 1]", key=f"train.dqn.{name}", value=value)

    def with_overrides(self, **overrides: object) -> Self:
        """Return a cloned config with updated fields."""

        return replace(self, **overrides)  # type: ignore[arg-type]


@dataclass(slots=True)
class PpoConfig:
    """Clipped-surrogate policy optimization settings."""

    n_steps: int = 2048  # Rollout length per update
    n_epochs: int = 10
    clip_range: float = 0.2
    gae_lambda: float = 0.95
    vf_coef: float = 0.5
    ent_coef: float = 0.0
    max_grad_norm: float = 0.5
    log_std_init: float = 0.0

    def __post_init__(self) -> None:
        _positive("train.ppo.n_steps", self.n_steps)
        _positive("train.ppo.n_epochs", self.n_epochs)
        _positive("train.ppo.clip_range", self.clip_range)
        _positive("train.ppo.max_grad_norm", self.max_grad_norm)
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ConfigError(
                "GAE lambda must lie in [0, 1]", key="train.ppo.gae_lambda", value=self.gae_lambda
            )
        if self.vf_coef < 0 or self.ent_coef < 0:
            raise ConfigError(
                "Loss coefficients must be non-negative",
                key="train.ppo.vf_coef" if self.vf_coef < 0 else "train.ppo.ent_coef",
                value=min(self.vf_coef, self.ent_coef),
            )

    def with_overrides(self, **overrides: object) -> Self:
        """Return a cloned config with updated fields."""

        return replace(self, **overrides)  # type: ignore[arg-type]


@dataclass(slots=True)
class RetryConfig:
    """Configuration for seed retries of training stages."""

    max_attempts: int = 3  # Maximum number of seeds tried (including the first)
    seed_stride: int = 1  # Increment between consecutive seeds

    def __post_init__(self) -> None:
        _positive("retry.max_attempts", self.max_attempts)


@dataclass(slots=True)
class TrainConfig:
    """Training budget and hyperparameters."""

    algorithm: Algorithm = "ppo"
    gamma: float = 0.99
    learning_rate: float = 3e-4
    batch_size: int = 64
    total_steps: int = 150_000
    seed: int = 0
    hidden: tuple[int, ...] = (64, 64)
    finetune_steps: int | None = None  # Warm-started retraining budget; None means total_steps
    eval_threshold: float = 0.9  # Required noise-free success fraction
    region_exit_penalty: float | None = None  # Penalty for leaving a restricted region
    log_interval: int = 5_000
    dqn: DqnConfig = field(default_factory=DqnConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    retry: RetryConfig = field(default_factory=RetryConfig)

    def __post_init__(self) -> None:
        if self.algorithm not in ("dqn", "ppo"):
            raise ConfigError("Unknown algorithm", key="train.algorithm", value=self.algorithm)
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError("Discount must lie in [0, 1]", key="train.gamma", value=self.gamma)
        _positive("train.learning_rate", self.learning_rate)
        _positive("train.batch_size", self.batch_size)
        _positive("train.total_steps", self.total_steps)
        if not 0.0 <= self.eval_threshold <= 1.0:
            raise ConfigError(
                "Evaluation threshold must lie in [0, 1]",
                key="train.eval_threshold",
                value=self.eval_threshold,
            )
        if self.region_exit_penalty is not None and self.region_exit_penalty < 0:
            raise ConfigError(
                "Exit penalty must be non-negative",
                key="train.region_exit_penalty",
                value=self.region_exit_penalty,
            )

    @property
    def finetune_budget(self) -> int:
        """Steps spent retraining on an extended region."""

        if self.finetune_steps is not None:
            return self.finetune_steps
        return self.total_steps

    @property
    def exit_penalty(self) -> float:
        """Penalty for leaving a restricted region.

        Defaults to twice the discounted cost of an endless episode at unit per-step cost.
        """
        if self.region_exit_penalty is not None:
            return self.region_exit_penalty
        return 2.0 / max(1.0 - self.gamma, 0.01)

    def with_overrides(self, **overrides: object) -> Self:
        """Return a cloned config with updated fields."""

        return replace(self, **overrides)  # type: ignore[arg-type]


@dataclass(slots=True)
class CriticalConfig:
    """Critical-set probing parameters."""

    probe_radius: float = 0.05  # Radius of the probing neighborhood
    divergence_horizon: float = 4.0  # Seconds simulated per probe
    resolution: float = 0.01  # Grid cell size (radians on the circle)
    batch_size: int = 8_192  # Probe trajectories simulated at once

    def __post_init__(self) -> None:
        _positive("critical.probe_radius", self.probe_radius)
        _positive("critical.divergence_horizon", self.divergence_horizon)
        _positive("critical.resolution", self.resolution)

    def with_overrides(self, **overrides: object) -> Self:
        """Return a cloned config with updated fields."""

        return replace(self, **overrides)  # type: ignore[arg-type]


@dataclass(slots=True)
class ExtensionConfig:
    """Backward propagation parameters."""

    horizon: float = 0.5  # Seconds of backward propagation
    step: float | None = None  # Integration step; None uses the environment sampling time
    seed_band: int = 1  # Neighbor rings around the critical set used as seeds
    min_overlap: float = 0.1  # Required overlap width

    def __post_init__(self) -> None:
        if self.horizon < 0:
            raise ConfigError("Horizon must be non-negative", key="extend.horizon")
        if self.min_overlap < 0:
            raise ConfigError("Overlap requirement must be non-negative", key="extend.min_overlap")
        if self.step is not None:
            _positive("extend.step", self.step)

    def with_overrides(self, **overrides: object) -> Self:
        """Return a cloned config with updated fields."""

        return replace(self, **overrides)  # type: ignore[arg-type]


@dataclass(slots=True)
class HybridConfig:
    """Hybrid closed-loop settings."""

    max_jumps: int = 100  # Zeno guard

    def __post_init__(self) -> None:
        _positive("hybrid.max_jumps", self.max_jumps)


@dataclass(slots=True)
class NoiseConfig:
    """Measurement noise used in experiments."""

    magnitude: float = 0.1
    kind: NoiseKindName = "adversarial"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.magnitude < 0:
            raise ConfigError("Noise magnitude must be non-negative", key="harness.noise.magnitude")
        if self.kind not in ("uniform", "adversarial"):
            raise ConfigError("Unknown noise kind", key="harness.noise.kind", value=self.kind)


@dataclass(slots=True)
class StuckConfig:
    """Thresholds for classifying a solution as stuck."""

    window: float = 2.0  # Seconds at the end of the run
    threshold: float = 0.05  # Max variation of the distance to the set-point

    def __post_init__(self) -> None:
        _positive("harness.stuck.window", self.window)
        _positive("harness.stuck.threshold", self.threshold)


@dataclass(slots=True)
class HarnessConfig:
    """Experiment settings."""

    duration: float = 4.0  # Simulated seconds per run
    q0_values: tuple[int, ...] = (0, 1)
    max_concurrency: int = 4  # Simultaneous simulations in comparisons
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    stuck: StuckConfig = field(default_factory=StuckConfig)

    def __post_init__(self) -> None:
        _positive("harness.duration", self.duration)
        _positive("harness.max_concurrency", self.max_concurrency)
        if any(q not in (0, 1) for q in self.q0_values):
            raise ConfigError("q0 values must be 0 or 1", key="harness.q0_values")


@dataclass(slots=True)
class RunConfig:
    """Complete, snapshot-able configuration of one pipeline run."""

    environment: str = UNIT_CIRCLE
    seed: int = 0
    output_dir: str = "runs"
    env: EnvConfig = field(default_factory=EnvConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    critical: CriticalConfig = field(default_factory=CriticalConfig)
    extend: ExtensionConfig = field(default_factory=ExtensionConfig)
    hybrid: HybridConfig = field(default_factory=HybridConfig)
    harness: HarnessConfig = field(default_factory=HarnessConfig)

    def __post_init__(self) -> None:
        if self.environment not in ENVIRONMENTS:
            raise ConfigError("Unknown environment", key="environment", value=self.environment)

    @classmethod
    def for_environment(cls, name: str, seed: int = 0) -> RunConfig:
        """Return the benchmark defaults for an environment.

        Args:
            name: ``"unit-circle"`` or ``"obstacle"``
            seed: Master seed used for training and noise

        Returns:
            Run configuration with per-environment defaults

        Raises:
            ConfigError: If the environment name is unknown
        """
        if name == UNIT_CIRCLE:
            config = cls(environment=name)
        elif name == OBSTACLE:
            config = cls(
                environment=name,
                env=EnvConfig(horizon=60),
                train=TrainConfig(
                    algorithm="dqn",
                    gamma=0.95,
                    learning_rate=5e-4,
                    batch_size=32,
                    total_steps=100_000,
                ),
                critical=CriticalConfig(resolution=0.05),
                extend=ExtensionConfig(horizon=0.5, seed_band=2, min_overlap=0.11),
                harness=HarnessConfig(duration=3.5),
            )
        else:
            raise ConfigError("Unknown environment", key="environment", value=name)
        return config.with_seed(seed)

    def with_seed(self, seed: int) -> RunConfig:
        """Return a copy whose training and noise seeds follow ``seed``."""

        harness = replace(self.harness, noise=replace(self.harness.noise, seed=seed))
        return replace(self, seed=seed, train=replace(self.train, seed=seed), harness=harness)

    def with_overrides(self, **overrides: object) -> Self:
        """Return a cloned config with updated fields."""

        return replace(self, **overrides)  # type: ignore[arg-type]

    def snapshot(self) -> dict[str, Any]:
        """Return the configuration as plain, YAML/JSON-safe data."""

        return _plain(asdict(self))  # type: ignore[no-any-return]

    def dump(self, path: Path) -> None:
        """Write the snapshot as YAML."""

        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(yaml.safe_dump(self.snapshot(), sort_keys=False), encoding="utf-8")


def _plain(value: Any) -> Any:
    if isinstance(value, Mapping):
        return {key: _plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(item) for item in value]
    return value


def _apply(obj: _T, data: Mapping[str, Any], prefix: str) -> _T:
    if not isinstance(data, Mapping):
        raise ConfigError("Expected a mapping", key=prefix or "<root>", value=data)
    known = {f.name: f for f in fields(obj)}  # type: ignore[arg-type]
    updates: dict[str, Any] = {}
    for key, value in data.items():
        path = f"{prefix}.{key}" if prefix else str(key)
        if key not in known:
            raise ConfigError("Unknown configuration key", key=path)
        current = getattr(obj, key)
        if is_dataclass(current) and not isinstance(current, type):
            updates[key] = _apply(current, value, path)
        elif isinstance(current, tuple) and isinstance(value, list):
            updates[key] = tuple(value)
        else:
            updates[key] = value
    try:
        return replace(obj, **updates)  # type: ignore[type-var]
    except TypeError as err:
        raise ConfigError(f"Invalid value in section {prefix or '<root>'}: {err}") from err


def build_run_config(data: Mapping[str, Any]) -> RunConfig:
    """Build a run configuration from a parsed mapping.

    The ``environment`` key selects the defaults the remaining keys override.

    Raises:
        ConfigError: On unknown keys or invalid values
    """
    if not isinstance(data, Mapping):
        raise ConfigError("Configuration root must be a mapping", value=data)
    name = data.get("environment", UNIT_CIRCLE)
    seed = data.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("Seed must be an integer", key="seed", value=seed)
    base = RunConfig.for_environment(str(name), seed=seed)
    rest = {key: value for key, value in data.items() if key not in ("environment", "seed")}
    return _apply(base, rest, "")


def load_run_config(path: str | Path | None, **overrides: Any) -> RunConfig:
    """Load a YAML run configuration and apply top-level overrides.

    Args:
        path: YAML file, or None to start from defaults
        **overrides: ``environment``, ``seed`` or ``output_dir`` overrides; None values
            are ignored

    Returns:
        The validated run configuration

    Raises:
        ConfigError: If the file cannot be parsed or has unknown keys
    """
    data: dict[str, Any] = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as err:
            raise ConfigError(f"Cannot read configuration file {path}") from err
        try:
            loaded = yaml.safe_load(text)
        except yaml.YAMLError as err:
            raise ConfigError(f"Invalid YAML in {path}") from err
        if loaded is not None:
            if not isinstance(loaded, dict):
                raise ConfigError("Configuration root must be a mapping", value=loaded)
            data = loaded
    for key, value in overrides.items():
        if value is not None:
            data[key] = value
    return build_run_config(data)
