# Copyright contributors to the swa-bench project. All rights reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     https://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

import asyncio
import json
import logging
import time
from argparse import Namespace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Type, TypeVar

import numpy as np
import pandas as pd
import yaml
from pydantic import BaseModel, ValidationError

import swa_bench
from swa_bench import distributions, params, presets
from swa_bench.app.config import AppConfig, get_app_config
from swa_bench.common.errors import ConfigError
from swa_bench.engine import run_pipeline, run_pipeline_concurrent
from swa_bench.metrics import DEFAULT_GAMMAS, Analyzer, completeness_oracle, to_report_frame
from swa_bench.models.distribution import EmpiricalSample
from swa_bench.models.engine import AggregateConfig, BoundedQueueSpec, EmittedInstance, PipelineConfig, PipelineResult
from swa_bench.models.manifest import RunManifest
from swa_bench.models.metrics import EvaluationReport
from swa_bench.models.queueing import QueueModel
from swa_bench.models.trace import Trace, TraceConfig
from swa_bench.observer import DEFAULT_OBSERVER, RunEvent, custom_serializer
from swa_bench.queueing.approx import predict, scan_batch
from swa_bench.queueing.simulation import des_simulate
from swa_bench.trace import build_catalog, generate_trace, instance_stats, read_trace, write_trace

logger = logging.getLogger(__name__)

M = TypeVar("M", bound=BaseModel)

DEFAULT_SLIDING_WINDOWS = (8000, 16000, 32000)


# Input documents


def load_model(path: str, cls: Type[M]) -> M:
    """Validate a JSON or YAML document at ``path`` into ``cls``."""
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"File not found: {p}")
    with p.open("r") as f:
        try:
            doc = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigError(f"Cannot parse {p}: {e}") from e
    if not isinstance(doc, dict):
        raise ConfigError(f"{p} must contain an object")
    try:
        return cls.model_validate(doc)
    except ValidationError as e:
        raise ConfigError(f"Invalid {cls.__name__} in {p}: {e}") from e


def with_overrides(model: M, **overrides: Any) -> M:
    update = {k: v for k, v in overrides.items() if v is not None}
    if not update:
        return model
    try:
        return type(model).model_validate({**model.model_dump(), **update})
    except ValidationError as e:
        raise ConfigError(f"Invalid {type(model).__name__} override: {e}") from e


def parse_floats(text: str, flag: str) -> List[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as e:
        raise ConfigError(f"{flag} expects comma-separated numbers, got '{text}'") from e


def parse_range(text: str, flag: str) -> List[int]:
    """``start:stop:step`` with an inclusive stop."""
    try:
        start, stop, step = (int(x) for x in text.split(":"))
    except ValueError as e:
        raise ConfigError(f"{flag} expects start:stop:step, got '{text}'") from e
    if step < 1 or start < 1 or stop < start:
        raise ConfigError(f"{flag} needs 1 <= start <= stop and step >= 1, got '{text}'")
    return list(range(start, stop + 1, step))


# Output


def output_dir(args: Namespace, app_config: AppConfig) -> Path:
    out = Path(args.out or app_config.output_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_json(path: Path, obj: Any) -> Path:
    path.write_text(json.dumps(obj, indent=2, default=custom_serializer, ensure_ascii=False) + "\n")
    return path


def write_emitted(emitted: List[EmittedInstance], path: Path, with_members: bool = True) -> Path:
    EmittedInstance.to_dataframe(emitted, with_members=with_members).to_csv(path, index=False, lineterminator="\n")
    return path


def read_emitted(path: str) -> List[EmittedInstance]:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"Emitted file not found: {p}")
    try:
        df = pd.read_csv(p, dtype=str, keep_default_na=False)
    except (pd.errors.EmptyDataError, pd.errors.ParserError, UnicodeDecodeError) as e:
        raise ConfigError(f"Cannot read emitted instances from {p}: {e}") from e
    return EmittedInstance.from_dataframe(df)


class CommandRun:
    """Bookkeeping shared by every subcommand: events, artifacts and the manifest."""

    def __init__(self, command: str, args: Namespace):
        self.command = command
        self.app_config = get_app_config()
        self.out = output_dir(args, self.app_config)
        self.started = time.perf_counter()
        self.seed: Optional[int] = None
        self.config: Dict[str, Any] = {}
        self.inputs: List[str] = []
        self.artifacts: List[Path] = []
        DEFAULT_OBSERVER.notify(RunEvent.command_start, {"command": command, "out": self.out})

    def artifact(self, path: Path) -> Path:
        self.artifacts.append(path)
        return path

    def finish(self) -> RunManifest:
        manifest = RunManifest(
            command=self.command,
            tool_version=swa_bench.__version__,
            seed=self.seed,
            config=json.loads(json.dumps(self.config, default=custom_serializer)),
            inputs=self.inputs,
            artifacts=[p.name for p in self.artifacts],
            wall_time_s=time.perf_counter() - self.started,
        )
        path = self.out / f"{self.command}-manifest.json"
        path.write_text(manifest.model_dump_json(indent=2) + "\n")
        DEFAULT_OBSERVER.notify(RunEvent.command_end, {"command": self.command, "artifacts": manifest.artifacts, "wall_time_s": manifest.wall_time_s})
        return manifest


def print_json(obj: Any, compact: bool = False):
    if compact:
        print(json.dumps(obj, separators=(",", ":"), default=custom_serializer))
    else:
        print(json.dumps(obj, indent=2, default=custom_serializer))


# gen-trace


def gen_trace(args: Namespace) -> Trace:
    run = CommandRun("gen-trace", args)
    cfg = load_model(args.config, TraceConfig) if args.config else TraceConfig(seed=run.app_config.seed)
    cfg = with_overrides(
        cfg,
        instance_count=args.instances,
        seed=args.seed,
        user_pool=args.user_pool,
        repeat_factor=args.repeat_factor,
        service_count=args.service_count,
        partitions=args.partitions,
        placement=args.placement,
        shared_atomics=True if args.shared_atomics else None,
    )
    run.seed = cfg.seed
    run.config = cfg.model_dump(mode="json", by_alias=True)

    catalog = build_catalog(cfg.service_count, cfg.degree_dist, cfg.seed, cfg.partitions, cfg.shared_atomics)
    trace = generate_trace(catalog, cfg)
    path = run.artifact(run.out / "trace.csv")
    write_trace(trace, path)
    logger.info(f"Trace written to {path}")
    run.finish()
    return trace


# fit-dist


def _load_sample(args: Namespace, run: CommandRun) -> EmpiricalSample:
    if bool(args.sample) == bool(args.trace):
        raise ConfigError("fit-dist needs exactly one of --sample or --trace")
    if args.sample:
        run.inputs.append(args.sample)
        if Path(args.sample).suffix.lower() in (".json", ".yaml", ".yml"):
            return load_model(args.sample, EmpiricalSample)
        try:
            values = pd.read_csv(args.sample, header=None).iloc[:, 0].astype(float).tolist()
        except (FileNotFoundError, pd.errors.EmptyDataError, ValueError) as e:
            raise ConfigError(f"Cannot read sample values from {args.sample}: {e}") from e
        return EmpiricalSample(values=values)

    run.inputs.append(args.trace)
    stats = instance_stats(read_trace(args.trace))
    if args.of == "degree":
        return EmpiricalSample(values=[s.degree for s in stats], unit="sub-services")
    return EmpiricalSample(values=[s.span_ms / 1000.0 for s in stats], unit="s")


def fit_dist(args: Namespace):
    run = CommandRun("fit-dist", args)
    sample = _load_sample(args, run)
    tol = args.tol if args.tol is not None else run.app_config.em_tol
    max_iter = args.max_iter if args.max_iter is not None else run.app_config.em_max_iter
    run.config = {"branches": args.branches, "max_phases": args.max_phases, "tol": tol, "max_iter": max_iter, "of": args.of, "size": len(sample.values)}

    result = distributions.fit_hyper_erlang_em(sample, branch_count=args.branches, max_phases=args.max_phases, tol=tol, max_iter=max_iter)
    distributions.write_distribution(result.dist, run.artifact(run.out / "fitted-dist.json"))
    write_json(run.artifact(run.out / "fit-result.json"), result.model_dump(mode="json", by_alias=True))

    if args.emit_curves:
        x = sample.to_array()
        grid = np.linspace(0.0, float(x.max()), args.grid_points)
        curves = distributions.emit_curves(result.dist, grid)
        curves["empirical_cdf"] = np.searchsorted(np.sort(x), grid, side="right") / len(x)
        curves.to_csv(run.artifact(run.out / "curves.csv"), index=False, lineterminator="\n")

    print_json({"dist": distributions.dump_distribution(result.dist), "log_likelihood": result.log_likelihood, "converged": result.converged})
    run.finish()
    return result


# estimate-params


def estimate_params(args: Namespace):
    run = CommandRun("estimate-params", args)
    degree_dist = distributions.load_distribution(args.degree_dist) if args.degree_dist else presets.DEGREE_ERLANG
    span_dist = distributions.load_distribution(args.span_dist) if args.span_dist else presets.SPAN_HYPER_ERLANG
    run.inputs = [p for p in (args.degree_dist, args.span_dist) if p]
    run.config = {
        "alpha": args.alpha,
        "beta": args.beta,
        "degree_dist": distributions.dump_distribution(degree_dist),
        "span_dist": distributions.dump_distribution(span_dist),
    }

    capacity = params.estimate_capacity(degree_dist, args.alpha, args.max_degree)
    timeout = params.estimate_timeout(span_dist, args.beta, args.max_timeout)
    result = {"capacity": capacity, "timeout_s": timeout}
    write_json(run.artifact(run.out / "params.json"), result)
    print_json(result, compact=True)
    run.finish()
    return result


# run-pipeline


def default_pipeline(app_config: AppConfig) -> PipelineConfig:
    return PipelineConfig(queue=BoundedQueueSpec(tuple_size=app_config.tuple_size, service_time_ms=app_config.union_service_ms))


def pipeline_config(args: Namespace, app_config: AppConfig) -> PipelineConfig:
    cfg = load_model(args.config, PipelineConfig) if args.config else default_pipeline(app_config)
    doc = cfg.model_dump()
    if args.queue_capacity is not None:
        doc["queue"]["capacity_override"] = args.queue_capacity
    aggregate = doc["aggregate"]
    if args.kind is not None and args.kind != aggregate["kind"]:
        aggregate = {"kind": args.kind}
    for field in ("capacity", "timeout_s", "window", "step"):
        value = getattr(args, field)
        if value is not None:
            aggregate[field] = value
    doc["aggregate"] = aggregate
    if args.strategy is not None:
        doc["strategy"] = args.strategy
    try:
        return PipelineConfig.model_validate(doc)
    except ValidationError as e:
        raise ConfigError(f"Invalid pipeline configuration: {e}") from e


def _stats_doc(result: PipelineResult) -> Dict[str, Any]:
    return {name: s.summary().model_dump() for name, s in result.stats.items()}


def run_pipeline_command(args: Namespace) -> PipelineResult:
    run = CommandRun("run-pipeline", args)
    cfg = pipeline_config(args, run.app_config)
    run.inputs = [p for p in (args.trace, args.config) if p]
    run.config = {**cfg.model_dump(mode="json", by_alias=True), "mode": args.mode, "concurrent": args.concurrent}

    trace = read_trace(args.trace)
    if args.concurrent:
        result = asyncio.run(run_pipeline_concurrent(trace, cfg))
    else:
        result = run_pipeline(trace, cfg, mode=args.mode, sweep_interval_ms=run.app_config.sweep_interval_ms)
    write_emitted(result.emitted, run.artifact(run.out / "emitted.csv"), with_members=not args.no_members)
    write_json(run.artifact(run.out / "stats.json"), _stats_doc(result))
    logger.info(f"{result.label}: {len(result.emitted)} instance(s) emitted")
    run.finish()
    return result


# evaluate


def _report_doc(report: EvaluationReport) -> Dict[str, Any]:
    return {"rows": report.to_table_rows(), "details": report.model_dump()}


def evaluate(args: Namespace) -> EvaluationReport:
    run = CommandRun("evaluate", args)
    gammas = parse_floats(args.gamma, "--gamma") if args.gamma else list(DEFAULT_GAMMAS)
    run.inputs = [args.emitted, args.trace]
    run.config = {"gammas": gammas}

    emitted = read_emitted(args.emitted)
    trace = read_trace(args.trace)
    report = Analyzer(emitted, trace).to_report(gammas)
    doc = _report_doc(report)
    write_json(run.artifact(run.out / "evaluation.json"), doc)
    print_json(doc["rows"])
    run.finish()
    return report


# predict / simulate-queue


def queue_model(args: Namespace) -> QueueModel:
    if bool(args.model) == bool(args.preset):
        raise ConfigError("Give exactly one of --model or --preset")
    if args.model:
        return load_model(args.model, QueueModel)
    return presets.QUEUE_PRESETS[args.preset]()


def predict_command(args: Namespace):
    run = CommandRun("predict", args)
    model = queue_model(args)
    run.inputs = [args.model] if args.model else []
    run.config = {"model": model.model_dump(mode="json", by_alias=True), "preset": args.preset, "scan_batch": args.scan_batch}

    if args.scan_batch:
        scan = scan_batch(model, parse_range(args.scan_batch, "--scan-batch"), max_states=run.app_config.max_states)
        doc = scan.model_dump()
        write_json(run.artifact(run.out / "batch-scan.json"), doc)
        df = pd.DataFrame({"K": scan.sizes, "L": scan.L, "W": scan.W})
        (run.out / "batch-scan.md").write_text(df.to_markdown(index=False) + "\n")
        run.artifact(run.out / "batch-scan.md")
        print_json({"fit_L": doc["fit_L"], "fit_W": doc["fit_W"]})
        run.finish()
        return scan

    indicators = predict(model, max_states=run.app_config.max_states)
    write_json(run.artifact(run.out / "prediction.json"), indicators.model_dump())
    print_json(indicators.model_dump(include={"L", "Lq", "W", "Wq", "Pbusy", "Ploss"}))
    run.finish()
    return indicators


def simulate_queue(args: Namespace):
    run = CommandRun("simulate-queue", args)
    model = queue_model(args)
    seed = args.seed if args.seed is not None else run.app_config.seed
    batches = args.batches if args.batches is not None else run.app_config.des_batches
    run.seed = seed
    run.inputs = [args.model] if args.model else []
    run.config = {"model": model.model_dump(mode="json", by_alias=True), "preset": args.preset, "arrivals": args.arrivals, "batches": batches}

    result = des_simulate(model, args.arrivals, seed, batches)
    write_json(run.artifact(run.out / "simulation.json"), result.model_dump())
    print_json(result.indicators.model_dump(include={"L", "Lq", "W", "Wq", "Pbusy", "Ploss"}))
    run.finish()
    return result


# compare


def _compare_configs(args: Namespace) -> List[AggregateConfig]:
    configs = [AggregateConfig(kind="swa", capacity=args.capacity, timeout_s=args.timeout_s)]
    windows = [int(w) for w in parse_floats(args.sliding, "--sliding")] if args.sliding else list(DEFAULT_SLIDING_WINDOWS)
    configs.extend(AggregateConfig(kind="sliding", window=w, step=w) for w in windows)
    return configs


def compare_frame(results: Sequence[PipelineResult], reports: Dict[str, EvaluationReport], oracle: Optional[float] = None) -> pd.DataFrame:
    """Completeness rows followed by resource rows, one column per configuration."""
    df = to_report_frame(reports)
    for result in results:
        summary = result.stats["aggregate"].summary()
        df.loc["Average queue length", result.label] = summary.avg_queue_length
        df.loc["Max queue length", result.label] = summary.peak_queue_length
        df.loc["Average storage (MB)", result.label] = summary.avg_storage_bytes / 2**20
        df.loc["Max storage (MB)", result.label] = summary.peak_storage_bytes / 2**20
        df.loc["Residence time (s)", result.label] = summary.avg_residence_ms / 1000.0
    if oracle is not None:
        df.loc["Oracle completeness(γ=1)", results[0].label] = oracle * 100
    return df


def compare(args: Namespace) -> pd.DataFrame:
    run = CommandRun("compare", args)
    gammas = parse_floats(args.gamma, "--gamma") if args.gamma else list(DEFAULT_GAMMAS)
    configs = _compare_configs(args)
    run.inputs = [args.trace]
    run.config = {"configs": [c.model_dump(mode="json") for c in configs], "strategy": args.strategy, "gammas": gammas, "mode": args.mode}

    trace = read_trace(args.trace)
    base = load_model(args.config, PipelineConfig) if args.config else default_pipeline(run.app_config)
    if args.strategy:
        base = with_overrides(base, strategy=args.strategy)
    results, reports = [], {}
    for aggregate in configs:
        cfg = base.model_copy(update={"aggregate": aggregate})
        result = run_pipeline(trace, cfg, mode=args.mode, sweep_interval_ms=run.app_config.sweep_interval_ms)
        results.append(result)
        reports[result.label] = Analyzer(result.emitted, trace).to_report(gammas)

    oracle = completeness_oracle(trace, args.capacity, args.timeout_s)
    df = compare_frame(results, reports, oracle)
    write_json(
        run.artifact(run.out / "compare.json"),
        {"reports": {label: _report_doc(r) for label, r in reports.items()}, "table": json.loads(df.to_json(orient="columns")), "oracle": oracle},
    )
    md = df.to_markdown(floatfmt=".4f", missingval="-")
    print(md)
    (run.out / "compare.md").write_text(md + "\n")
    run.artifact(run.out / "compare.md")
    run.finish()
    return df
