"""Public package exports for hybridrl."""

from .agents import train_policy, train_with_retries
from .config import (
    CriticalConfig,
    EnvConfig,
    ExtensionConfig,
    HarnessConfig,
    HybridConfig,
    NoiseConfig,
    RetryConfig,
    RunConfig,
    StuckConfig,
    TrainConfig,
    load_run_config,
)
from .critical import CriticalSet, find_critical_set, partition, restrict_policy
from .dqn import train_dqn
from .envs import ObstacleEnv, StepResult, TerminationCause, UnitCircleEnv, make_env
from .exceptions import (
    ActionOutOfBoundsError,
    ArtifactFormatError,
    ArtifactNotFoundError,
    ConfigError,
    CoverageError,
    DimensionMismatchError,
    DivergenceError,
    HybridRLError,
    HybridSystemError,
    InsufficientOverlapError,
    NoCriticalPointsError,
    NoForwardPassError,
    OutOfRegionError,
    PipelineStageError,
    RetryExhaustedError,
    TrainingFailedError,
    UnsupportedTopologyError,
    ZenoError,
)
from .extend import backward_flow, extend_partitions, extend_region, overlap_width
from .harness import (
    ExperimentReport,
    Outcome,
    StuckCriterion,
    acompare,
    aim_noise,
    compare,
    dwell_violations,
    motivate,
    policy_map,
    sided_consistency,
)
from .hybrid import HybridState, HybridSystem, HybridTrajectory, assemble, hybrid_step, solve
from .nn import Adam, Mlp
from .noise import NoiseKind, NoiseModel
from .pipeline import Pipeline, PipelineResult, run_pipeline
from .policies import GaussianPolicy, Policy, QPolicy, RestrictedPolicy
from .ppo import train_ppo
from .regions import AngularGrid, BoxGrid, Region
from .training import ReplayBuffer, RestrictedEnv

__all__ = [
    # Configuration
    "RunConfig",
    "EnvConfig",
    "TrainConfig",
    "RetryConfig",
    "CriticalConfig",
    "ExtensionConfig",
    "HybridConfig",
    "HarnessConfig",
    "NoiseConfig",
    "StuckConfig",
    "load_run_config",
    # Environments and networks
    "UnitCircleEnv",
    "ObstacleEnv",
    "StepResult",
    "TerminationCause",
    "make_env",
    "Mlp",
    "Adam",
    # Learning
    "Policy",
    "QPolicy",
    "GaussianPolicy",
    "RestrictedPolicy",
    "ReplayBuffer",
    "RestrictedEnv",
    "train_dqn",
    "train_ppo",
    "train_policy",
    "train_with_retries",
    # Design pipeline
    "Region",
    "AngularGrid",
    "BoxGrid",
    "CriticalSet",
    "find_critical_set",
    "partition",
    "restrict_policy",
    "backward_flow",
    "extend_region",
    "extend_partitions",
    "overlap_width",
    "HybridState",
    "HybridSystem",
    "HybridTrajectory",
    "assemble",
    "hybrid_step",
    "solve",
    "Pipeline",
    "PipelineResult",
    "run_pipeline",
    # Experiments
    "NoiseKind",
    "NoiseModel",
    "StuckCriterion",
    "Outcome",
    "ExperimentReport",
    "acompare",
    "aim_noise",
    "compare",
    "dwell_violations",
    "motivate",
    "policy_map",
    "sided_consistency",
    # Exceptions
    "HybridRLError",
    "ConfigError",
    "ActionOutOfBoundsError",
    "DimensionMismatchError",
    "NoForwardPassError",
    "DivergenceError",
    "TrainingFailedError",
    "RetryExhaustedError",
    "NoCriticalPointsError",
    "UnsupportedTopologyError",
    "OutOfRegionError",
    "InsufficientOverlapError",
    "HybridSystemError",
    "CoverageError",
    "ZenoError",
    "PipelineStageError",
    "ArtifactNotFoundError",
    "ArtifactFormatError",
]
