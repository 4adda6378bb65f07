"""The seven-step design pipeline with persisted, resumable stages."""

from __future__ import annotations

import logging
from collections.abc import Iterator
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .agents import train_with_retries
from .artifacts import (
    ARTIFACT_VERSION,
    PIPELINE_FORMAT,
    ArtifactLayout,
    load_critical,
    load_hybrid,
    load_policy,
    load_region,
    save_critical,
    save_hybrid,
    save_policy,
    save_region,
    write_json,
)
from .config import RunConfig
from .critical import CriticalSet, find_critical_set, partition, restrict_policy
from .envs import ControlEnv, make_env
from .exceptions import ArtifactNotFoundError, ConfigError, HybridRLError, PipelineStageError
from .extend import Extension, extend_partitions
from .hybrid import HybridSystem, assemble
from .models import PipelineManifest
from .policies import Policy, RestrictedPolicy, unwrap
from .regions import Region
from .training import MetricsLog, RestrictedEnv

logger = logging.getLogger(__name__)

STAGES = {
    1: "train baseline",
    2: "find critical set",
    3: "partition",
    4: "restrict policy",
    5: "extend partitions",
    6: "retrain region policies",
    7: "assemble hybrid system",
}


@contextmanager
def _stage(step: int) -> Iterator[None]:
    name = STAGES[step]
    logger.info("Step %d: %s", step, name)
    try:
        yield
    except (PipelineStageError, ArtifactNotFoundError):
        raise
    except HybridRLError as e:
        logger.error("Step %d (%s) failed: %s", step, name, str(e).splitlines()[0])
        raise PipelineStageError(
            f"Pipeline failed at step {step}", step=step, stage=name, original_error=e
        ) from e


@dataclass(slots=True)
class PipelineResult:
    """Everything the pipeline produced or reloaded."""

    layout: ArtifactLayout
    baseline: Policy
    critical: CriticalSet
    partitions: tuple[Region, Region]
    extended: tuple[Region, Region]
    region_policies: tuple[Policy, Policy]
    system: HybridSystem
    seeds: dict[str, int] = field(default_factory=dict)
    approach_fractions: list[float] = field(default_factory=list)

    @property
    def overlap_width(self) -> float:
        return self.system.overlap_width


class Pipeline:
    """Runs the design steps for one configuration, persisting each stage's artifacts.

    Every ``run_*`` method computes a stage and writes its artifacts; every ``load_*``
    method reloads them, so runs can resume from any step.
    """

    def __init__(self, config: RunConfig, output_dir: str | Path | None = None) -> None:
        self.config = config
        root = output_dir if output_dir is not None else config.output_dir
        self.layout = ArtifactLayout(Path(root))
        self.env: ControlEnv = make_env(config.environment, config.env)
        self.metadata: dict[str, Any] = config.snapshot()
        self.seeds: dict[str, int] = {}
        self.approach_fractions: list[float] = []

    # Step 1
    def run_baseline(self) -> Policy:
        """Train the baseline policy on the whole state space."""

        with _stage(1):
            policy, seed = train_with_retries(
                self.env,
                self.config.train,
                on_metrics=lambda _seed, log: log.write_csv(self.layout.baseline_metrics),
            )
            self.seeds[self.layout.baseline_policy.name] = seed
            save_policy(self.layout.baseline_policy, policy, self.env.name, self.metadata)
        return policy

    def load_baseline(self) -> Policy:
        return load_policy(self.layout.baseline_policy, self.env.name)

    # Step 2
    def run_critical(self, baseline: Policy) -> CriticalSet:
        with _stage(2):
            critical = find_critical_set(baseline, self.env, self.config.critical)
            save_critical(self.layout.critical, critical, self.metadata)
        return critical

    def load_critical(self) -> CriticalSet:
        return load_critical(self.layout.critical)

    # Step 3
    def run_partition(self, critical: CriticalSet) -> tuple[Region, Region]:
        with _stage(3):
            parts = partition(self.env, critical.region, critical.center_sides)
            for index, part in enumerate(parts):
                save_region(self.layout.partition(index), part, self.metadata)
        return parts

    def load_partitions(self) -> tuple[Region, Region]:
        return load_region(self.layout.partition(0)), load_region(self.layout.partition(1))

    # Step 4
    def run_restrict(
        self, baseline: Policy, partitions: tuple[Region, Region]
    ) -> tuple[RestrictedPolicy, RestrictedPolicy]:
        with _stage(4):
            restricted = (
                restrict_policy(baseline, partitions[0]),
                restrict_policy(baseline, partitions[1]),
            )
        return restricted

    # Step 5
    def run_extend(
        self,
        restricted: tuple[Policy, Policy],
        partitions: tuple[Region, Region],
        critical: CriticalSet,
    ) -> tuple[Region, Region]:
        with _stage(5):
            first, second, width = extend_partitions(
                self.env, restricted, partitions, critical.region, self.config.extend
            )
            extensions: tuple[Extension, Extension] = (first, second)
            for index, extension in enumerate(extensions):
                save_region(
                    self.layout.extended(index),
                    extension.region.renamed(f"M{index}_ext"),
                    self.metadata,
                )
            self.approach_fractions = [e.approach_fraction for e in extensions]
        logger.info("Overlap width of the extended regions: %.4f", width)
        return first.region.renamed("M0_ext"), second.region.renamed("M1_ext")

    def load_extended(self) -> tuple[Region, Region]:
        return load_region(self.layout.extended(0)), load_region(self.layout.extended(1))

    # Step 6
    def run_retrain(
        self, baseline: Policy, extended: tuple[Region, Region]
    ) -> tuple[Policy, Policy]:
        """Warm-start one policy per extended region from the baseline."""

        train = self.config.train
        policies = []
        with _stage(6):
            for index, region in enumerate(extended):
                env = RestrictedEnv(self.env, region, train.exit_penalty)
                metrics_path = self.layout.region_metrics(index)

                def write_metrics(_seed: int, log: MetricsLog, path: Path = metrics_path) -> None:
                    log.write_csv(path)

                policy, seed = train_with_retries(
                    env,
                    train,
                    warm_start=unwrap(baseline),
                    total_steps=train.finetune_budget,
                    on_metrics=write_metrics,
                )
                self.seeds[self.layout.region_policy(index).name] = seed
                save_policy(self.layout.region_policy(index), policy, self.env.name, self.metadata)
                policies.append(policy)
        return policies[0], policies[1]

    def load_region_policies(self) -> tuple[Policy, Policy]:
        return (
            load_policy(self.layout.region_policy(0), self.env.name),
            load_policy(self.layout.region_policy(1), self.env.name),
        )

    # Step 7
    def run_assemble(
        self,
        policies: tuple[Policy, Policy],
        extended: tuple[Region, Region],
        critical: Region | None = None,
    ) -> HybridSystem:
        with _stage(7):
            system = assemble(
                self.env,
                policies[0],
                policies[1],
                extended[0],
                extended[1],
                max_jumps=self.config.hybrid.max_jumps,
                critical=critical,
            )
            save_hybrid(self.layout, system, self.metadata)
        return system

    def load_hybrid(self) -> HybridSystem:
        return load_hybrid(self.layout.hybrid, self.env)

    def write_manifest(self, completed_step: int, result: PipelineResult | None = None) -> None:
        manifest: PipelineManifest = {
            "format": PIPELINE_FORMAT,
            "version": ARTIFACT_VERSION,
            "environment": self.env.name,
            "completed_step": completed_step,
            "seeds": dict(self.seeds),
            "config": self.metadata,
        }
        if result is not None:
            manifest["critical"] = result.critical.region.summary()
            manifest["partitions"] = [part.summary() for part in result.partitions]
            manifest["extended"] = [region.summary() for region in result.extended]
            manifest["overlap_width"] = result.overlap_width
            manifest["approach_fractions"] = list(result.approach_fractions)
            manifest["hybrid"] = self.layout.hybrid.name
        write_json(self.layout.pipeline, manifest)

    def run(self, resume_from: int = 1) -> PipelineResult:
        """Execute the steps from ``resume_from`` on, reloading the artifacts of earlier ones.

        Args:
            resume_from: First step to compute (1 to 7)

        Returns:
            The pipeline result

        Raises:
            ConfigError: If ``resume_from`` is not a step number
            ArtifactNotFoundError: If an artifact of a skipped step is missing
            PipelineStageError: If a stage fails, tagged with its step number
        """
        if resume_from not in STAGES:
            raise ConfigError("Resume step must be between 1 and 7", value=resume_from)
        logger.info(
            "Running pipeline for %s into %s from step %d",
            self.env.name,
            self.layout.root,
            resume_from,
        )
        self.config.dump(self.layout.config)

        baseline = self.run_baseline() if resume_from <= 1 else self.load_baseline()
        critical = self.run_critical(baseline) if resume_from <= 2 else self.load_critical()
        partitions = self.run_partition(critical) if resume_from <= 3 else self.load_partitions()
        restricted = self.run_restrict(baseline, partitions)
        extended = (
            self.run_extend(restricted, partitions, critical)
            if resume_from <= 5
            else self.load_extended()
        )
        policies = (
            self.run_retrain(baseline, extended)
            if resume_from <= 6
            else self.load_region_policies()
        )
        system = self.run_assemble(policies, extended, critical.region)

        result = PipelineResult(
            self.layout,
            baseline,
            critical,
            partitions,
            extended,
            policies,
            system,
            dict(self.seeds),
            list(self.approach_fractions),
        )
        self.write_manifest(7, result)
        return result


def run_pipeline(
    config: RunConfig,
    output_dir: str | Path | None = None,
    *,
    resume_from: int = 1,
) -> PipelineResult:
    """Run the design pipeline end to end and persist every intermediate artifact.

    Args:
        config: Run configuration
        output_dir: Artifact directory (defaults to ``config.output_dir``)
        resume_from: First step to compute; earlier steps are reloaded from disk

    Returns:
        The baseline policy, critical set, partitions, extended regions, region policies and
        assembled hybrid system
    """
    return Pipeline(config, output_dir).run(resume_from)
