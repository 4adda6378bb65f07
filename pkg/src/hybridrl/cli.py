"""Command-line entry point: pipeline stages, experiments and artifact inspection."""

from __future__ import annotations

import argparse
import logging
import sys
from collections.abc import Sequence
from dataclasses import replace
from pathlib import Path

import numpy as np

from .artifacts import (
    CRITICAL_FORMAT,
    HYBRID_FORMAT,
    load_policy,
    load_region,
    read_json,
    region_from_payload,
    save_trajectory,
    write_json,
)
from .config import ENVIRONMENTS, RunConfig, load_run_config
from .exceptions import ArtifactNotFoundError, ConfigError, HybridRLError, PipelineStageError
from .extend import overlap_width
from .harness import (
    ExperimentReport,
    StuckCriterion,
    aim_noise,
    benchmark_initial_states,
    classify,
    compare,
    motivate,
    motivating_initial_states,
    overlap_initial_states,
    policy_map,
    sided_consistency,
    write_policy_map,
)
from .hybrid import HybridState, solve
from .noise import NoiseModel
from .pipeline import Pipeline, PipelineResult
from .regions import REGION_FORMAT, Region

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_MISSING = 3


def _step(value: str) -> int:
    text = value.lower().removeprefix("step")
    if not text.isdigit() or not 1 <= int(text) <= 7:
        raise argparse.ArgumentTypeError(f"expected step1 .. step7, got {value!r}")
    return int(text)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML run configuration")
    common.add_argument("--env", choices=ENVIRONMENTS, help="Environment (overrides config)")
    common.add_argument("--seed", type=int, help="Master seed (overrides config)")
    common.add_argument("--output-dir", help="Artifact directory (overrides config)")
    common.add_argument("-v", "--verbose", action="count", default=0, help="More logging")

    noisy = argparse.ArgumentParser(add_help=False)
    noisy.add_argument("--noise", type=float, help="Noise magnitude (overrides config)")
    noisy.add_argument(
        "--noise-kind", choices=("uniform", "adversarial"), help="Noise distribution"
    )
    noisy.add_argument("--duration", type=float, help="Simulated seconds per run")

    parser = argparse.ArgumentParser(
        prog="hybridrl",
        description="Design hysteresis-switching hybrid controllers from trained RL policies.",
    )
    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("train", parents=[common], help="Step 1: train the baseline policy")
    commands.add_parser(
        "find-critical", parents=[common], help="Steps 2-3: critical set and partitions"
    )
    commands.add_parser("extend", parents=[common], help="Steps 4-5: extended regions")
    commands.add_parser(
        "hybridize", parents=[common], help="Steps 6-7: region policies and hybrid system"
    )
    hyrl = commands.add_parser("hyrl", parents=[common], help="Run all pipeline steps")
    hyrl.add_argument(
        "--resume-from", type=_step, default=1, metavar="stepN", help="First step to compute"
    )
    simulate = commands.add_parser(
        "simulate", parents=[common, noisy], help="Simulate the baseline or the hybrid system"
    )
    simulate.add_argument("--controller", choices=("baseline", "hybrid"), default="baseline")
    simulate.add_argument("--ic", type=float, nargs=2, action="append", metavar=("X", "Y"))
    simulate.add_argument("--q0", type=int, choices=(0, 1), action="append")
    commands.add_parser(
        "compare", parents=[common, noisy], help="Baseline versus hybrid under the same noise"
    )
    inspect = commands.add_parser(
        "inspect-region", parents=[common], help="Summarize a region, critical or hybrid file"
    )
    inspect.add_argument("path", type=Path)
    mapping = commands.add_parser(
        "policy-map", parents=[common], help="Tabulate a policy's action over the grid"
    )
    mapping.add_argument("--policy", type=Path, help="Policy file (default: baseline)")
    mapping.add_argument("--region", type=Path, help="Only cells of this region")
    mapping.add_argument("--resolution", type=float, help="Grid resolution")
    return parser


def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity > 1:
        level = logging.DEBUG
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def _load_config(args: argparse.Namespace) -> RunConfig:
    config = load_run_config(
        args.config, environment=args.env, seed=args.seed, output_dir=args.output_dir
    )
    harness = config.harness
    noise = harness.noise
    if getattr(args, "noise", None) is not None:
        noise = replace(noise, magnitude=args.noise)
    if getattr(args, "noise_kind", None) is not None:
        noise = replace(noise, kind=args.noise_kind)
    if getattr(args, "duration", None) is not None:
        harness = replace(harness, duration=args.duration)
    return replace(config, harness=replace(harness, noise=noise))


def _print_result(result: PipelineResult) -> None:
    print(f"M*: {result.critical.region.summary()}")
    for part in result.partitions:
        print(f"Partition {part.summary()}")
    for region in result.extended:
        print(f"Extended {region.summary()}")
    print(f"Overlap width: {result.overlap_width:.4f}")
    print(f"Hybrid system: {result.layout.hybrid}")


def cmd_train(pipeline: Pipeline, args: argparse.Namespace) -> int:
    pipeline.config.dump(pipeline.layout.config)
    pipeline.run_baseline()
    print(f"Baseline policy: {pipeline.layout.baseline_policy}")
    print(f"Metrics: {pipeline.layout.baseline_metrics}")
    return EXIT_OK


def cmd_find_critical(pipeline: Pipeline, args: argparse.Namespace) -> int:
    critical = pipeline.run_critical(pipeline.load_baseline())
    parts = pipeline.run_partition(critical)
    print(f"M*: {critical.region.summary()}")
    for part in parts:
        print(f"Partition {part.summary()}")
    return EXIT_OK


def cmd_extend(pipeline: Pipeline, args: argparse.Namespace) -> int:
    baseline = pipeline.load_baseline()
    partitions = pipeline.load_partitions()
    critical = pipeline.load_critical()
    restricted = pipeline.run_restrict(baseline, partitions)
    extended = pipeline.run_extend(restricted, partitions, critical)
    for region in extended:
        print(f"Extended {region.summary()}")
    print(f"Overlap width: {overlap_width(*extended, critical.region):.4f}")
    return EXIT_OK


def cmd_hybridize(pipeline: Pipeline, args: argparse.Namespace) -> int:
    extended = pipeline.load_extended()
    policies = pipeline.run_retrain(pipeline.load_baseline(), extended)
    system = pipeline.run_assemble(policies, extended, pipeline.load_critical().region)
    print(f"Hybrid system: {pipeline.layout.hybrid}")
    print(f"Overlap width: {system.overlap_width:.4f}")
    return EXIT_OK


def cmd_hyrl(pipeline: Pipeline, args: argparse.Namespace) -> int:
    _print_result(pipeline.run(args.resume_from))
    return EXIT_OK


def _write_report(report: ExperimentReport, directory: Path) -> Path:
    path = directory / "report.json"
    write_json(path, report.to_payload())
    return path


def cmd_simulate(pipeline: Pipeline, args: argparse.Namespace) -> int:
    config = pipeline.config
    env = pipeline.env
    noise = NoiseModel.from_config(config.harness.noise)
    stuck = StuckCriterion.from_config(config.harness.stuck)
    directory = pipeline.layout.experiments / f"simulate_{args.controller}"
    if args.controller == "baseline":
        ics = np.array(args.ic) if args.ic else None
        critical = pipeline.load_critical().region if pipeline.layout.critical.exists() else None
        report = motivate(
            env,
            pipeline.load_baseline(),
            ics if ics is not None else motivating_initial_states(env.name),
            noise,
            config.harness.duration,
            stuck=stuck,
            output_dir=directory,
            max_concurrency=config.harness.max_concurrency,
            config=pipeline.metadata,
            critical=critical,
        )
        print(report.table())
        print(f"Report: {_write_report(report, directory)}")
        return EXIT_OK

    system = pipeline.load_hybrid()
    noise = aim_noise(env, noise, system.critical)
    ics = np.array(args.ic) if args.ic else benchmark_initial_states(env.name)
    q0_values = args.q0 or list(config.harness.q0_values)
    n_steps = max(1, round(config.harness.duration / env.dt))
    for index, ic in enumerate(ics):
        for q0 in q0_values:
            stream = noise.stream(n_steps, offset=index)
            trajectory = solve(system, HybridState(ic, q0), config.harness.duration, stream)
            path = directory / f"ic{index}_hybrid_q{q0}.csv"
            save_trajectory(path, trajectory)
            outcome = classify(env, trajectory, stuck)
            print(
                f"[{ic[0]:+.3f}, {ic[1]:+.3f}] q0={q0}: {outcome.value}, "
                f"{trajectory.jumps} jumps -> {path}"
            )
    return EXIT_OK


def cmd_compare(pipeline: Pipeline, args: argparse.Namespace) -> int:
    config = pipeline.config
    env = pipeline.env
    harness = config.harness
    directory = pipeline.layout.experiments / "compare"
    system = pipeline.load_hybrid()
    report = compare(
        env,
        pipeline.load_baseline(),
        system,
        benchmark_initial_states(env.name),
        NoiseModel.from_config(harness.noise),
        harness.duration,
        stuck=StuckCriterion.from_config(harness.stuck),
        q0_values=harness.q0_values,
        output_dir=directory,
        max_concurrency=harness.max_concurrency,
        config=pipeline.metadata,
    )
    print(report.table())
    print(f"Report: {_write_report(report, directory)}")
    sided = sided_consistency(
        system,
        overlap_initial_states(env.name),
        harness.duration,
        q0_values=harness.q0_values,
        noise=NoiseModel.from_config(harness.noise),
    )
    for result in sided:
        status = "ok" if result.consistent else "MISMATCH"
        print(
            f"[{result.ic[0]:+.3f}, {result.ic[1]:+.3f}] q0={result.q0}: "
            f"side {result.direction} ({status})"
        )
    return EXIT_OK


def cmd_inspect_region(pipeline: Pipeline, args: argparse.Namespace) -> int:
    payload = read_json(args.path, "region")
    kind = payload.get("format")
    if kind == REGION_FORMAT:
        region = region_from_payload(payload)
        _print_region(region)
    elif kind == CRITICAL_FORMAT:
        region = region_from_payload(payload.get("region", {}), "$.region")
        _print_region(region)
        print(f"Witness pairs: {len(payload.get('witnesses', []))}")
    elif kind == HYBRID_FORMAT:
        regions = [load_region(args.path.parent / name) for name in payload.get("regions", [])]
        for region in regions:
            _print_region(region)
        if len(regions) == 2:
            overlap = regions[0].intersection(regions[1], "overlap")
            _print_region(overlap)
    else:
        raise ConfigError("Not a region, critical set or hybrid file", value=str(args.path))
    return EXIT_OK


def _print_region(region: Region) -> None:
    print(region.summary())
    print(f"  cells: {region.size}/{region.grid.n_cells}")
    print(f"  components: {len(region.components())}")
    print(f"  transversal width: {region.transversal_width():.4f}")


def cmd_policy_map(pipeline: Pipeline, args: argparse.Namespace) -> int:
    env = pipeline.env
    policy = (
        load_policy(args.policy, env.name) if args.policy is not None else pipeline.load_baseline()
    )
    region = load_region(args.region) if args.region is not None else None
    if region is not None:
        grid = region.grid
    else:
        grid = env.make_grid(args.resolution or pipeline.config.critical.resolution)
    path = pipeline.layout.policy_map
    write_policy_map(path, policy_map(policy, grid, region))
    print(f"Policy map: {path}")
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "find-critical": cmd_find_critical,
    "extend": cmd_extend,
    "hybridize": cmd_hybridize,
    "hyrl": cmd_hyrl,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "inspect-region": cmd_inspect_region,
    "policy-map": cmd_policy_map,
}


def main(argv: Sequence[str] | None = None) -> int:
    """Run a command and return its exit code.

    Exit codes: 0 success, 1 stage failure, 2 usage or configuration error,
    3 missing artifact.
    """
    args = build_parser().parse_args(argv)
    _configure_logging(args.verbose)
    try:
        pipeline = Pipeline(_load_config(args))
        return COMMANDS[args.command](pipeline, args)
    except ArtifactNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_MISSING
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except PipelineStageError as e:
        print(f"error: step {e.step} ({e.stage}) failed: {e.original_error}", file=sys.stderr)
        return EXIT_FAILURE
    except HybridRLError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
