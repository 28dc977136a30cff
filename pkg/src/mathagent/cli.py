"""Command-line harness: run, ablate, validate, report.

Exit codes: 0 success, 1 validation or alignment findings, 2 config
error, 3 dataset error. Logs go to stderr; stdout carries report data.
"""

from __future__ import annotations

import argparse
import datetime
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .backends import (
    Backend,
    HttpBackend,
    ReplayBackend,
    RequestSettings,
    RetryPolicy,
    ScriptedBackend,
)
from .data_model import (
    EmptyDataset,
    ErrorCategory,
    QuestionType,
    SchemaError,
    dataset_stats,
    load_dataset,
    scan_dataset,
)
from .metrics import AlignmentError
from .pipeline import (
    AblationMode,
    PhaseSetup,
    PipelineSetup,
    call_counts,
    load_detections,
    run_dataset,
    write_detections,
)
from .prompts import missing_prompt_assets
from .report import (
    attach_deltas,
    build_report_row,
    render_ablation_csv,
    render_csv,
    render_markdown,
)

EXIT_OK = 0
EXIT_FINDINGS = 1
EXIT_CONFIG = 2
EXIT_DATASET = 3

log = logging.getLogger("mathagent")


class ConfigError(Exception):
    pass


class DatasetError(Exception):
    pass


PHASE_NAMES = ("phase1", "phase2", "phase3")


@dataclass
class RunConfig:
    dataset: Path
    mode: AblationMode
    backends: dict[str, dict]
    router: dict[str, str] = field(default_factory=dict)
    workers: int = 1
    cache_path: Path | None = None
    output_dir: Path = Path("runs/out")
    seed: int = 0
    prompt_dir: Path | None = None


def _resolve(base: Path, value: str) -> Path:
    path = Path(value)
    return path if path.is_absolute() else base / path


def load_config(path) -> RunConfig:
    """Parse and sanity-check a run config; all problems raise ConfigError."""
    config_path = Path(path)
    try:
        raw = json.loads(config_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {config_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {config_path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")

    base = config_path.parent
    if "dataset" not in raw:
        raise ConfigError("config needs a 'dataset' path")
    mode_raw = raw.get("mode", "full")
    try:
        mode = AblationMode(mode_raw)
    except ValueError:
        raise ConfigError(
            f"unknown mode {mode_raw!r}; expected one of "
            + ", ".join(m.value for m in AblationMode)
        ) from None

    backends = raw.get("backends")
    if not isinstance(backends, dict):
        raise ConfigError("config needs a 'backends' object")
    for name in PHASE_NAMES:
        if name not in backends:
            raise ConfigError(f"backends must define {name!r}")

    router = raw.get("router", {})
    if not isinstance(router, dict):
        raise ConfigError("'router' must be an object")
    valid_keys = {q.value for q in QuestionType} | {"default"}
    for key, target in router.items():
        if key not in valid_keys:
            raise ConfigError(f"router key {key!r} is not a question type")
        if target not in backends:
            raise ConfigError(f"router target {target!r} is not a configured backend")

    workers = raw.get("workers", 1)
    if not isinstance(workers, int) or workers < 1:
        raise ConfigError("'workers' must be a positive integer")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("'seed' must be an integer")

    return RunConfig(
        dataset=_resolve(base, raw["dataset"]),
        mode=mode,
        backends=backends,
        router=router,
        workers=workers,
        cache_path=(
            _resolve(base, raw["cache_path"]) if raw.get("cache_path") else None
        ),
        output_dir=_resolve(base, raw.get("output_dir", "runs/out")),
        seed=seed,
        prompt_dir=(
            _resolve(base, raw["prompt_dir"]) if raw.get("prompt_dir") else None
        ),
    )


def _settings_from_spec(spec: dict) -> RequestSettings:
    return RequestSettings(
        model_id=spec.get("model_id", "scripted"),
        system_prompt=spec.get("system_prompt", ""),
        temperature=spec.get("temperature", 0.0),
        max_tokens=spec.get("max_tokens", 1024),
    )


def build_backend(spec: dict, base: Path, cache_path: Path | None = None) -> Backend:
    """Construct a backend from its config object.

    A run-level cache_path wraps the result in a replay layer unless the
    spec is already a replay backend.
    """
    if not isinstance(spec, dict):
        raise ConfigError("backend spec must be an object")
    kind = spec.get("kind")
    if kind == "http":
        if "base_url" not in spec:
            raise ConfigError("http backend needs 'base_url'")
        retry_spec = spec.get("retry", {})
        backend: Backend = HttpBackend(
            base_url=spec["base_url"],
            api_key_env=spec.get("api_key_env", "MATHAGENT_API_KEY"),
            retry=RetryPolicy(
                max_attempts=retry_spec.get("max_attempts", 3),
                backoff_base_ms=retry_spec.get("backoff_base_ms", 250),
            ),
            rate_limit=spec.get("rate_limit", 4),
            timeout_s=spec.get("timeout_s", 60.0),
        )
    elif kind == "scripted":
        if "script_path" in spec:
            backend = ScriptedBackend.from_file(_resolve(base, spec["script_path"]))
            if "default_reply" in spec:
                backend.default_reply = spec["default_reply"]
        else:
            backend = ScriptedBackend(
                phases=spec.get("phases"),
                by_fingerprint=spec.get("by_fingerprint"),
                default_reply=spec.get("default_reply"),
            )
    elif kind == "replay":
        if "cache_path" not in spec or "inner" not in spec:
            raise ConfigError("replay backend needs 'cache_path' and 'inner'")
        inner = build_backend(spec["inner"], base)
        return ReplayBackend(inner, _resolve(base, spec["cache_path"]))
    else:
        raise ConfigError(f"unknown backend kind {kind!r}")
    if cache_path is not None:
        return ReplayBackend(backend, cache_path)
    return backend


def build_setup(config: RunConfig, config_base: Path) -> PipelineSetup:
    """Fresh backends and router for one pipeline run."""
    built: dict[str, PhaseSetup] = {}
    for name, spec in config.backends.items():
        built[name] = PhaseSetup(
            backend=build_backend(spec, config_base, config.cache_path),
            settings=_settings_from_spec(spec),
        )
    default_name = config.router.get("default", "phase2")
    router: dict[QuestionType, PhaseSetup] = {}
    for key, target in config.router.items():
        if key == "default":
            continue
        router[QuestionType(key)] = built[target]
    return PipelineSetup(
        phase1=built["phase1"],
        phase2=built[default_name],
        phase3=built["phase3"],
        router=router,
        prompt_dir=config.prompt_dir,
    )


def _check_prompts(prompt_dir) -> None:
    missing = missing_prompt_assets(prompt_dir)
    if missing:
        raise ConfigError("missing prompt assets: " + ", ".join(missing))


def _load_samples(dataset_path: Path):
    try:
        samples = load_dataset(dataset_path)
    except OSError as exc:
        raise DatasetError(f"cannot read dataset {dataset_path}: {exc}") from exc
    except SchemaError as exc:
        raise DatasetError(f"dataset {dataset_path}: {exc}") from exc
    if not samples:
        raise DatasetError(f"dataset {dataset_path} has no samples")
    return samples


def _utc_now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")


def _run_one_mode(samples, config: RunConfig, config_base: Path, mode: AblationMode):
    setup = build_setup(config, config_base)
    detections = run_dataset(samples, mode, setup, workers=config.workers)
    model = setup.phase3.settings.model_id
    return detections, model


def cmd_run(args) -> int:
    config = load_config(args.config)
    _check_prompts(config.prompt_dir)
    samples = _load_samples(config.dataset)
    log.info("running %d samples in mode %s", len(samples), config.mode.value)

    started = _utc_now()
    detections, model = _run_one_mode(samples, config, Path(args.config).parent, config.mode)
    finished = _utc_now()

    out_dir = config.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    write_detections(detections, out_dir / "detections.jsonl")

    row = build_report_row(detections, samples, model)
    csv_text = render_csv([row])
    (out_dir / "report.csv").write_text(csv_text, encoding="utf-8")
    (out_dir / "report.md").write_text(render_markdown([row]), encoding="utf-8")

    failures = sum(1 for d in detections if d.failure is not None)
    meta = {
        "model": model,
        "mode": config.mode.value,
        "dataset": str(config.dataset),
        "n_samples": len(samples),
        "n_failures": failures,
        "call_counts": call_counts(detections),
        "workers": config.workers,
        "seed": config.seed,
        "started_at": started,
        "finished_at": finished,
    }
    (out_dir / "run_meta.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    if failures:
        log.warning("%d of %d samples failed; see detections.jsonl", failures, len(samples))
    sys.stdout.write(csv_text)
    return EXIT_OK


def cmd_ablate(args) -> int:
    config = load_config(args.config)
    _check_prompts(config.prompt_dir)
    samples = _load_samples(config.dataset)
    out_dir = config.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)

    entries = []
    for mode in AblationMode:
        log.info("ablation mode %s", mode.value)
        detections, model = _run_one_mode(samples, config, Path(args.config).parent, mode)
        write_detections(detections, out_dir / f"detections_{mode.value}.jsonl")
        row = build_report_row(detections, samples, model)
        row.model = mode.value
        entries.append((mode.value, row, call_counts(detections)))

    csv_text = render_ablation_csv(entries)
    (out_dir / "ablation.csv").write_text(csv_text, encoding="utf-8")
    sys.stdout.write(csv_text)
    return EXIT_OK


def _print_stats(samples) -> None:
    stats = dataset_stats(samples)
    print(f"total: {stats.total}")
    print("by_question_type:")
    for qtype in QuestionType:
        if qtype in stats.by_question_type:
            print(f"  {qtype.value}: {stats.by_question_type[qtype]}")
    if None in stats.by_question_type:
        print(f"  unlabeled: {stats.by_question_type[None]}")
    print("by_error_category:")
    for cat in ErrorCategory:
        if cat in stats.by_error_category:
            print(f"  {cat.value}: {stats.by_error_category[cat]}")
    print(
        f"steps: mean={stats.step_count_mean} "
        f"min={stats.step_count_min} max={stats.step_count_max}"
    )
    print(
        f"question_length: mean={stats.question_length_mean} "
        f"min={stats.question_length_min} max={stats.question_length_max}"
    )


def cmd_validate(args) -> int:
    dataset_path = Path(args.dataset)
    try:
        samples, findings = scan_dataset(dataset_path)
    except OSError as exc:
        raise DatasetError(f"cannot read dataset {dataset_path}: {exc}") from exc
    for finding in findings:
        print(str(finding))
    if samples:
        _print_stats(samples)
    if not samples and not findings:
        print("line 0: field '': dataset contains no samples")
        return EXIT_FINDINGS
    return EXIT_FINDINGS if findings else EXIT_OK


def cmd_report(args) -> int:
    samples = _load_samples(Path(args.dataset))
    try:
        detections = load_detections(Path(args.detections))
    except OSError as exc:
        raise DatasetError(f"cannot read detections: {exc}") from exc
    except ValueError as exc:
        log.error("%s", exc)
        return EXIT_FINDINGS

    model = args.model
    if model is None:
        meta_path = Path(args.detections).parent / "run_meta.json"
        if meta_path.is_file():
            try:
                model = json.loads(meta_path.read_text(encoding="utf-8")).get("model")
            except (OSError, json.JSONDecodeError):
                model = None
    if model is None:
        model = "run"

    try:
        row = build_report_row(detections, samples, model)
        rows = [row]
        if args.baseline:
            base_detections = load_detections(Path(args.baseline))
            base_row = build_report_row(base_detections, samples, model + " (baseline)")
            rows = [base_row, attach_deltas(row, base_row)]
    except AlignmentError as exc:
        log.error("alignment: %s", exc)
        return EXIT_FINDINGS
    except ValueError as exc:
        log.error("%s", exc)
        return EXIT_FINDINGS

    csv_text = render_csv(rows)
    if args.out_dir:
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.csv").write_text(csv_text, encoding="utf-8")
        (out_dir / "report.md").write_text(render_markdown(rows), encoding="utf-8")
    sys.stdout.write(csv_text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mathagent",
        description="Locate the first wrong step in student math solutions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the pipeline over a dataset")
    p_run.add_argument("--config", required=True, help="path to run config JSON")
    p_run.set_defaults(func=cmd_run)

    p_ablate = sub.add_parser("ablate", help="run all four ablation modes")
    p_ablate.add_argument("--config", required=True, help="path to run config JSON")
    p_ablate.set_defaults(func=cmd_ablate)

    p_validate = sub.add_parser("validate", help="schema-check a dataset and print stats")
    p_validate.add_argument("dataset", help="dataset JSONL path")
    p_validate.set_defaults(func=cmd_validate)

    p_report = sub.add_parser("report", help="recompute a report from detections")
    p_report.add_argument("detections", help="detections JSONL path")
    p_report.add_argument("dataset", help="dataset JSONL path")
    p_report.add_argument("--baseline", help="baseline detections for deltas")
    p_report.add_argument("--out-dir", help="where to write report.csv and report.md")
    p_report.add_argument("--model", help="model label for the report row")
    p_report.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(message)s"
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("config: %s", exc)
        return EXIT_CONFIG
    except DatasetError as exc:
        log.error("dataset: %s", exc)
        return EXIT_DATASET
    except EmptyDataset as exc:
        log.error("dataset: %s", exc)
        return EXIT_DATASET


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
