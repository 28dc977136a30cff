"""Three-phase detection pipeline and its ablation variants.

Per sample: (1) decide whether the image adds information beyond the
text, (2) if it does, transcribe it according to the question type,
(3) hand everything to the text-only analyzer. Ablations drop phase 1,
replace phase 2 routing with plain captioning, or cut the problem text
out of the analyzer prompt. A failing sample is recorded, never fatal.
"""

from __future__ import annotations

import enum
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable

from .analyzer import analyze
from .backends import (
    Backend,
    BackendError,
    CallRecord,
    RecordingBackend,
    RequestSettings,
)
from .consistency import ConsistencyVerdict, check_consistency
from .data_model import ErrorCategory, QuestionType, Sample
from .interpreter import (
    TranscriptSource,
    TypeInferenceError,
    VisualTranscript,
    interpret_visual,
    resolve_question_type,
)


class AblationMode(enum.Enum):
    FULL = "full"
    NO_VALIDATOR = "no_validator"
    NO_INTERPRETER = "no_interpreter"
    NO_ANALYZER = "no_analyzer"


class PhaseError(Exception):
    """A pipeline phase failed for one sample."""

    def __init__(self, phase: str, cause: Exception):
        self.phase = phase
        self.cause = cause
        super().__init__(f"{phase}: {type(cause).__name__}: {cause}")


@dataclass(frozen=True)
class PhaseSetup:
    backend: Backend
    settings: RequestSettings = RequestSettings()


@dataclass(frozen=True)
class PipelineSetup:
    phase1: PhaseSetup
    phase2: PhaseSetup
    phase3: PhaseSetup
    # per-question-type overrides for phase 2; phase2 handles the rest
    router: dict[QuestionType, PhaseSetup] = field(default_factory=dict)
    prompt_dir: object = None

    def phase2_for(self, question_type: QuestionType | None) -> PhaseSetup:
        if question_type is not None and question_type in self.router:
            return self.router[question_type]
        return self.phase2


@dataclass
class PhaseTrace:
    phase1: ConsistencyVerdict | None = None
    phase2: VisualTranscript | None = None
    phase3_raw: str = ""
    backend_calls: list[CallRecord] = field(default_factory=list)


@dataclass
class Detection:
    sample_id: str
    mode: AblationMode
    predicted_step: int | None
    predicted_category: ErrorCategory | None
    trace: PhaseTrace
    failure: str | None = None


def detect_errors(sample: Sample, mode: AblationMode, setup: PipelineSetup) -> Detection:
    """Run one sample through the pipeline; never raises.

    Backend and IO failures mark the sample as failed (scored as a miss
    on both subtasks) so one bad sample cannot sink a dataset run.
    """
    records: list[CallRecord] = []
    trace = PhaseTrace(backend_calls=records)

    def recorder(backend: Backend, phase: str) -> Backend:
        return RecordingBackend(backend, phase, records)

    phase = "phase1"
    try:
        if mode is not AblationMode.NO_VALIDATOR:
            trace.phase1 = check_consistency(
                sample,
                recorder(setup.phase1.backend, "phase1"),
                setup.phase1.settings,
                setup.prompt_dir,
            )

        if mode is AblationMode.NO_VALIDATOR:
            needs_transcript = sample.image is not None
        else:
            needs_transcript = sample.image is not None and not trace.phase1.consistent

        if needs_transcript:
            phase = "phase2"
            if mode is AblationMode.NO_INTERPRETER:
                # unified captioning: no type-driven scheduling, no inference
                source = (
                    TranscriptSource.DATASET_LABEL
                    if sample.question_type is not None
                    else None
                )
                trace.phase2 = interpret_visual(
                    sample,
                    sample.question_type,
                    recorder(setup.phase2.backend, "phase2"),
                    setup.phase2.settings,
                    setup.prompt_dir,
                    source=source,
                    caption_only=True,
                )
            else:
                try:
                    qtype, source = resolve_question_type(
                        sample,
                        recorder(setup.phase2.backend, "phase2.type"),
                        setup.phase2.settings,
                        setup.prompt_dir,
                    )
                except TypeInferenceError:
                    # unresolvable type: transcribe as a plain caption
                    qtype, source = None, TranscriptSource.INFERRED
                chosen = setup.phase2_for(qtype)
                trace.phase2 = interpret_visual(
                    sample,
                    qtype,
                    recorder(chosen.backend, "phase2"),
                    chosen.settings,
                    setup.prompt_dir,
                    source=source,
                )

        phase = "phase3"
        output = analyze(
            sample,
            trace.phase2,
            recorder(setup.phase3.backend, "phase3"),
            setup.phase3.settings,
            include_problem_text=(mode is not AblationMode.NO_ANALYZER),
            prompt_dir=setup.prompt_dir,
        )
        trace.phase3_raw = output.raw_text
        if output.parse_ok:
            return Detection(
                sample_id=sample.id,
                mode=mode,
                predicted_step=output.error_step,
                predicted_category=output.error_category,
                trace=trace,
            )
        return Detection(
            sample_id=sample.id,
            mode=mode,
            predicted_step=None,
            predicted_category=None,
            trace=trace,
        )
    except (BackendError, OSError) as exc:
        failure = PhaseError(phase, exc)
        return Detection(
            sample_id=sample.id,
            mode=mode,
            predicted_step=None,
            predicted_category=None,
            trace=trace,
            failure=str(failure),
        )


def run_dataset(
    samples: Iterable[Sample],
    mode: AblationMode,
    setup: PipelineSetup,
    workers: int = 1,
) -> list[Detection]:
    """Detect over a dataset; results come back in sample order."""
    samples = list(samples)
    if workers <= 1:
        return [detect_errors(s, mode, setup) for s in samples]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(detect_errors, s, mode, setup) for s in samples]
        return [f.result() for f in futures]


def call_counts(detections: Iterable[Detection]) -> dict[str, int]:
    """Backend calls per phase tag, aggregated over a run."""
    counts: dict[str, int] = {}
    for det in detections:
        for record in det.trace.backend_calls:
            counts[record.phase] = counts.get(record.phase, 0) + 1
    return counts


# --- detection (de)serialization -------------------------------------------


def _transcript_to_dict(t: VisualTranscript | None):
    if t is None:
        return None
    return {
        "representation": t.representation.value,
        "content": t.content,
        "question_type": t.question_type.value if t.question_type else None,
        "source": t.source.value if t.source else None,
        "findings": list(t.findings),
    }


def _verdict_to_dict(v: ConsistencyVerdict | None):
    if v is None:
        return None
    return {
        "consistent": v.consistent,
        "raw_text": v.raw_text,
        "confidence_note": v.confidence_note,
    }


def detection_to_dict(det: Detection) -> dict:
    return {
        "sample_id": det.sample_id,
        "mode": det.mode.value,
        "predicted_step": det.predicted_step,
        "predicted_category": (
            det.predicted_category.value if det.predicted_category else None
        ),
        "failure": det.failure,
        "trace": {
            "phase1": _verdict_to_dict(det.trace.phase1),
            "phase2": _transcript_to_dict(det.trace.phase2),
            "phase3_raw": det.trace.phase3_raw,
            "backend_calls": [
                {
                    "phase": r.phase,
                    "fingerprint": r.fingerprint,
                    "from_cache": r.from_cache,
                    "latency_ms": r.latency_ms,
                }
                for r in det.trace.backend_calls
            ],
        },
    }


def write_detections(detections: Iterable[Detection], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for det in detections:
            fh.write(
                json.dumps(detection_to_dict(det), sort_keys=True, ensure_ascii=False)
                + "\n"
            )


@dataclass
class StoredDetection:
    """A detection read back from JSONL; enough to score and re-report."""

    sample_id: str
    predicted_step: int | None
    predicted_category: ErrorCategory | None
    mode: str
    failure: str | None
    trace: dict


def load_detections(path) -> list[StoredDetection]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                category = obj.get("predicted_category")
                out.append(
                    StoredDetection(
                        sample_id=obj["sample_id"],
                        predicted_step=obj.get("predicted_step"),
                        predicted_category=(
                            ErrorCategory(category) if category else None
                        ),
                        mode=obj.get("mode", ""),
                        failure=obj.get("failure"),
                        trace=obj.get("trace", {}),
                    )
                )
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise ValueError(f"bad detection line {line_no} in {path}: {exc}") from exc
    return out
