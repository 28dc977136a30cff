"""Question-type resolution and type-driven visual transcription.

Plane geometry images become formal facts, diagram images become LaTeX
tables, and everything else becomes a caption. A dataset-provided
question_type label always wins over inference.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .backends import Backend, ImageSegment, ModelRequest, RequestSettings, TextSegment
from .data_model import QuestionType, Sample
from .formal_language import (
    FactList,
    ParseError,
    parse_facts,
    serialize_facts,
    validate_arity,
    check_latex_table,
)
from .prompts import load_prompt, render_prompt


class TypeInferenceError(Exception):
    """The backend reply matched no question type, even after a retry."""


# Lowercased spellings recognized in type-inference replies.
TYPE_SYNONYMS: dict[QuestionType, tuple[str, ...]] = {
    QuestionType.PLANE_GEOMETRY: (
        "plane_geometry", "plane geometry", "planegeometry", "plane-geometry",
    ),
    QuestionType.SOLID_GEOMETRY: (
        "solid_geometry", "solid geometry", "solidgeometry", "solid-geometry",
    ),
    QuestionType.DIAGRAM: ("diagram",),
    QuestionType.ALGEBRA: ("algebra",),
    QuestionType.MATH_COMMONSENSE: (
        "math_commonsense", "math commonsense", "mathematical commonsense",
        "commonsense", "common sense",
    ),
}

_TYPE_REMINDER = (
    "Reply with exactly one of: plane geometry, solid geometry, diagram, "
    "algebra, math commonsense."
)


def match_question_type(reply: str) -> QuestionType | None:
    """Earliest synonym occurrence wins; ties go to the longer synonym."""
    low = reply.lower()
    best: tuple[int, int, str] | None = None
    best_type: QuestionType | None = None
    for qtype, synonyms in TYPE_SYNONYMS.items():
        for syn in synonyms:
            idx = low.find(syn)
            if idx < 0:
                continue
            key = (idx, -len(syn), qtype.value)
            if best is None or key < best:
                best = key
                best_type = qtype
    return best_type


class TranscriptSource(enum.Enum):
    DATASET_LABEL = "dataset_label"
    INFERRED = "inferred"


class Representation(enum.Enum):
    FORMAL_LANGUAGE = "formal_language"
    LATEX_TABLE = "latex_table"
    CAPTION = "caption"


@dataclass(frozen=True)
class VisualTranscript:
    representation: Representation
    content: str  # serialized facts, LaTeX source, or caption text
    question_type: QuestionType | None
    source: TranscriptSource | None
    facts: FactList | None = None
    findings: tuple[str, ...] = ()


def _image_request(
    sample: Sample, prompt: str, settings: RequestSettings, phase: str
) -> ModelRequest:
    if sample.image is None:
        raise ValueError(f"sample {sample.id} has no image to transcribe")
    return ModelRequest(
        model_id=settings.model_id,
        system_prompt=settings.system_prompt,
        segments=(TextSegment(prompt), ImageSegment(sample.image)),
        temperature=settings.temperature,
        max_tokens=settings.max_tokens,
        phase=phase,
        sample_id=sample.id,
    )


def resolve_question_type(
    sample: Sample,
    backend: Backend,
    settings: RequestSettings = RequestSettings(),
    prompt_dir=None,
) -> tuple[QuestionType, TranscriptSource]:
    """Dataset label if present (zero calls); otherwise ask the backend.

    An unmatched reply earns one retry with an explicit format reminder;
    a second miss raises TypeInferenceError.
    """
    if sample.question_type is not None:
        return sample.question_type, TranscriptSource.DATASET_LABEL

    template = load_prompt("phase2_question_type", prompt_dir)
    prompt = render_prompt(template, {"question_text": sample.question_text})
    reply = backend.complete(
        _image_request(sample, prompt, settings, "phase2.type")
    ).text
    matched = match_question_type(reply)
    if matched is not None:
        return matched, TranscriptSource.INFERRED

    retry_reply = backend.complete(
        _image_request(sample, prompt + "\n" + _TYPE_REMINDER, settings, "phase2.type")
    ).text
    matched = match_question_type(retry_reply)
    if matched is not None:
        return matched, TranscriptSource.INFERRED
    raise TypeInferenceError(
        f"sample {sample.id}: no question type in reply {retry_reply!r}"
    )


def interpret_visual(
    sample: Sample,
    question_type: QuestionType | None,
    backend: Backend,
    settings: RequestSettings = RequestSettings(),
    prompt_dir=None,
    source: TranscriptSource | None = None,
    caption_only: bool = False,
) -> VisualTranscript:
    """Transcribe the sample image with exactly one backend call.

    caption_only forces the caption route regardless of type (used when
    type-driven scheduling is ablated away). A formal-language reply that
    fails to parse falls back to a caption carrying the raw reply, with
    the parse failure recorded as a finding.
    """
    route = question_type
    if caption_only:
        route = None

    if route is QuestionType.PLANE_GEOMETRY:
        prompt_name = "phase2_formal"
    elif route is QuestionType.DIAGRAM:
        prompt_name = "phase2_latex"
    else:
        prompt_name = "phase2_caption"

    template = load_prompt(prompt_name, prompt_dir)
    prompt = render_prompt(template, {"question_text": sample.question_text})
    reply = backend.complete(_image_request(sample, prompt, settings, "phase2")).text

    if route is QuestionType.PLANE_GEOMETRY:
        try:
            facts = parse_facts(reply)
        except ParseError as exc:
            return VisualTranscript(
                representation=Representation.CAPTION,
                content=reply,
                question_type=question_type,
                source=source,
                findings=(f"formal parse failed: {exc}",),
            )
        findings = tuple(
            f"arity: {v.predicate} expects {v.expected} args, got {v.actual}"
            for v in validate_arity(facts)
        )
        return VisualTranscript(
            representation=Representation.FORMAL_LANGUAGE,
            content=serialize_facts(facts),
            question_type=question_type,
            source=source,
            facts=facts,
            findings=findings,
        )

    if route is QuestionType.DIAGRAM:
        report = check_latex_table(reply)
        findings = tuple(f"latex: {f.message} at {f.offset}" for f in report.findings)
        return VisualTranscript(
            representation=Representation.LATEX_TABLE,
            content=reply,
            question_type=question_type,
            source=source,
            findings=findings,
        )

    return VisualTranscript(
        representation=Representation.CAPTION,
        content=reply,
        question_type=question_type,
        source=source,
    )
