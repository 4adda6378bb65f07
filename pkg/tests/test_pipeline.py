"""Tests for the resumable design pipeline, mostly with training replaced by a fixed policy."""

from __future__ import annotations

import json
import math

import numpy as np
import pytest

from hybridrl import (
    ArtifactNotFoundError,
    ConfigError,
    GaussianPolicy,
    NoCriticalPointsError,
    PipelineStageError,
    RestrictedEnv,
    RunConfig,
    run_pipeline,
    train_ppo,
)
from hybridrl.artifacts import save_policy
from hybridrl.config import PpoConfig
from hybridrl.envs import UnitCircleEnv
from hybridrl.pipeline import Pipeline

from .conftest import FakeTraining, constant_gaussian, linear_gaussian


def test_full_run_writes_every_artifact(
    run_config: RunConfig, fake_training: FakeTraining
) -> None:
    result = run_pipeline(run_config)

    layout = result.layout
    for path in (
        layout.config,
        layout.baseline_policy,
        layout.baseline_metrics,
        layout.critical,
        layout.partition(0),
        layout.partition(1),
        layout.extended(0),
        layout.extended(1),
        layout.region_policy(0),
        layout.region_policy(1),
        layout.region_metrics(1),
        layout.hybrid,
        layout.pipeline,
    ):
        assert path.is_file(), path.name
    assert len(fake_training.calls) == 3


def test_result_describes_a_hysteresis_design(
    run_config: RunConfig, fake_training: FakeTraining
) -> None:
    result = run_pipeline(run_config)

    assert result.critical.region.contains(np.array([-1.0, 0.0]))
    assert result.extended[0].name == "M0_ext"
    assert result.partitions[0].issubset(result.extended[0])
    assert result.partitions[1].issubset(result.extended[1])
    assert result.overlap_width >= 0.5
    assert result.system.mode_of([0.0, 1.0]) == 0
    assert result.system.mode_of([math.cos(math.pi + 0.1), math.sin(math.pi + 0.1)]) is None
    assert result.approach_fractions == [1.0, 1.0]


def test_region_policies_are_warm_started_on_restricted_envs(
    run_config: RunConfig, fake_training: FakeTraining
) -> None:
    result = run_pipeline(run_config)

    retrain = fake_training.calls[1:]
    assert all(isinstance(call["env"], RestrictedEnv) for call in retrain)
    assert all(call["warm_start"] is result.baseline for call in retrain)
    assert all(call["total_steps"] == run_config.train.finetune_budget for call in retrain)
    assert run_config.train.finetune_budget == run_config.train.total_steps
    envs = [call["env"] for call in retrain]
    penalties = [env.exit_penalty for env in envs if isinstance(env, RestrictedEnv)]
    assert penalties == pytest.approx([200.0, 200.0])


def test_manifest_records_seeds_and_summaries(
    run_config: RunConfig, fake_training: FakeTraining
) -> None:
    result = run_pipeline(run_config)

    manifest = json.loads(result.layout.pipeline.read_text(encoding="utf-8"))
    assert manifest["format"] == "hybridrl.pipeline"
    assert manifest["completed_step"] == 7
    assert manifest["seeds"] == {
        "step1_policy.json": 3,
        "step6_policy_0.json": 3,
        "step6_policy_1.json": 3,
    }
    assert manifest["extended"][0].startswith("M0_ext: ")
    assert manifest["overlap_width"] == pytest.approx(result.overlap_width)
    assert manifest["config"]["seed"] == 3


class TestResume:
    """Reloading earlier steps from disk."""

    def test_resume_from_assembly_skips_training(
        self, run_config: RunConfig, fake_training: FakeTraining
    ) -> None:
        first = run_pipeline(run_config)

        again = run_pipeline(run_config, resume_from=7)

        assert len(fake_training.calls) == 3
        assert again.extended == first.extended
        assert again.critical.region == first.critical.region

    def test_resume_from_extension_retrains_region_policies(
        self, run_config: RunConfig, fake_training: FakeTraining
    ) -> None:
        run_pipeline(run_config)

        again = run_pipeline(run_config, resume_from=5)

        assert len(fake_training.calls) == 5
        assert again.overlap_width >= 0.5

    def test_missing_artifacts(self, run_config: RunConfig, fake_training: FakeTraining) -> None:
        with pytest.raises(ArtifactNotFoundError) as exc_info:
            run_pipeline(run_config, resume_from=3)

        assert exc_info.value.path.name == "step1_policy.json"
        assert fake_training.calls == []

    def test_resume_step_must_exist(self, run_config: RunConfig) -> None:
        with pytest.raises(ConfigError):
            Pipeline(run_config).run(resume_from=8)


def test_stage_failure_names_the_step(
    monkeypatch: pytest.MonkeyPatch, run_config: RunConfig
) -> None:
    monkeypatch.setattr("hybridrl.pipeline.train_with_retries", FakeTraining(constant_gaussian))

    with pytest.raises(PipelineStageError) as exc_info:
        run_pipeline(run_config)

    assert exc_info.value.step == 2
    assert exc_info.value.stage == "find critical set"
    assert isinstance(exc_info.value.original_error, NoCriticalPointsError)


class TestTunedBaseline:
    """Steps 2-7 on a PPO-tuned network baseline, with real region retraining."""

    @pytest.fixture
    def tuned_config(self, run_config: RunConfig) -> RunConfig:
        train = run_config.train.with_overrides(
            total_steps=128,
            batch_size=32,
            eval_threshold=0.0,
            ppo=PpoConfig(n_steps=64, n_epochs=2),
        )
        config = run_config.with_overrides(train=train)
        pipeline = Pipeline(config)
        baseline = train_ppo(pipeline.env, train, warm_start=linear_gaussian())
        save_policy(pipeline.layout.baseline_policy, baseline, pipeline.env.name)
        return config

    def test_design_from_tuned_baseline(self, tuned_config: RunConfig) -> None:
        result = run_pipeline(tuned_config, resume_from=2)

        assert result.critical.region.contains(UnitCircleEnv.state_at(math.pi))
        assert result.overlap_width >= tuned_config.extend.min_overlap
        assert result.system.critical == result.critical.region
        for part, extended in zip(result.partitions, result.extended):
            assert part.issubset(extended)
        assert all(isinstance(p, GaussianPolicy) for p in result.region_policies)
        assert all(p is not result.baseline for p in result.region_policies)

    def test_rerun_with_same_seed_is_identical(self, tuned_config: RunConfig) -> None:
        layout = run_pipeline(tuned_config, resume_from=2).layout
        paths = [
            layout.critical,
            layout.partition(0),
            layout.partition(1),
            layout.extended(0),
            layout.extended(1),
            layout.region_policy(0),
            layout.region_policy(1),
        ]
        first = [path.read_bytes() for path in paths]

        run_pipeline(tuned_config, resume_from=2)

        assert [path.read_bytes() for path in paths] == first
