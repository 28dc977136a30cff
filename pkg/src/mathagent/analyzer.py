"""Integrative error analysis (final pipeline phase).

The analyzer sees only text: problem statement, visual transcript (or a
note that the image adds nothing), both answers, and the numbered steps.
It must answer in two lines, "Error Step: #<k>" and "Error Category:
<name>". One re-ask with a format reminder is allowed, so a sample costs
at most two analyzer calls.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .backends import Backend, ModelRequest, RequestSettings, TextSegment
from .data_model import ErrorCategory, Sample, UnknownCategory, parse_category
from .interpreter import Representation, VisualTranscript
from .prompts import load_prompt, render_prompt

_STEP_RE = re.compile(r"error\s+step\s*:?\s*(?:#|step)?\s*(\d+)", re.IGNORECASE)
_CAT_MARKER_RE = re.compile(r"error\s+category\s*:?\s*", re.IGNORECASE)

_FORMAT_REMINDER = (
    'Format reminder: reply with exactly two lines, "Error Step: #<k>" '
    'and "Error Category: <name>".'
)

_NO_IMAGE_NOTE = "The image is fully described by the problem text."

_VISUAL_HEADERS = {
    Representation.FORMAL_LANGUAGE: "Visual facts (formal notation):",
    Representation.LATEX_TABLE: "Visual table (LaTeX):",
    Representation.CAPTION: "Visual description:",
}


@dataclass(frozen=True)
class AnalyzerOutput:
    error_step: int | None
    error_category: ErrorCategory | None
    parse_ok: bool
    raw_text: str


def parse_analyzer_output(raw_text: str, n_steps: int) -> AnalyzerOutput:
    """Total parser for analyzer replies; never raises.

    The step is the first "Error Step" match anywhere in the reply; a
    value outside [1, n_steps] keeps its number but fails the parse. The
    category is taken from the first "Error Category" line whose value
    resolves, trying the whole remainder of the line and then the part
    before the first punctuation break.
    """
    step: int | None = None
    m = _STEP_RE.search(raw_text)
    if m is not None:
        step = int(m.group(1))

    category: ErrorCategory | None = None
    for line in raw_text.splitlines():
        marker = _CAT_MARKER_RE.search(line)
        if marker is None:
            continue
        tail = line[marker.end():]
        for candidate in (tail, re.split(r"[,.;:]", tail)[0]):
            try:
                category = parse_category(candidate)
                break
            except UnknownCategory:
                continue
        if category is not None:
            break

    ok = step is not None and category is not None and 1 <= step <= n_steps
    return AnalyzerOutput(
        error_step=step, error_category=category, parse_ok=ok, raw_text=raw_text
    )


def format_steps(steps) -> str:
    return "\n".join(f"Step {i}: {text}" for i, text in enumerate(steps, start=1))


def build_analysis_prompt(
    sample: Sample,
    transcript: VisualTranscript | None,
    include_problem_text: bool = True,
    prompt_dir=None,
) -> str:
    """Assemble the analyzer prompt; sections appear in a fixed order.

    transcript=None means the image was bypassed as consistent (or there
    was none), which the prompt states explicitly. include_problem_text
    is switched off by the analyzer-integration ablation.
    """
    if include_problem_text:
        question_section = f"Problem:\n{sample.question_text}"
    else:
        question_section = ""
    if transcript is None:
        visual_section = _NO_IMAGE_NOTE
    else:
        visual_section = f"{_VISUAL_HEADERS[transcript.representation]}\n{transcript.content}"
    template = load_prompt("phase3_analyzer", prompt_dir)
    return render_prompt(
        template,
        {
            "question_text": question_section,
            "visual": visual_section,
            "correct_answer": sample.correct_answer,
            "student_answer": sample.incorrect_answer,
            "steps": format_steps(sample.steps),
        },
    )


def analyze(
    sample: Sample,
    transcript: VisualTranscript | None,
    backend: Backend,
    settings: RequestSettings = RequestSettings(),
    include_problem_text: bool = True,
    prompt_dir=None,
) -> AnalyzerOutput:
    """Run the analyzer with at most one format-reminder re-ask."""

    def ask(prompt: str) -> AnalyzerOutput:
        request = ModelRequest(
            model_id=settings.model_id,
            system_prompt=settings.system_prompt,
            segments=(TextSegment(prompt),),
            temperature=settings.temperature,
            max_tokens=settings.max_tokens,
            phase="phase3",
            sample_id=sample.id,
        )
        response = backend.complete(request)
        return parse_analyzer_output(response.text, len(sample.steps))

    prompt = build_analysis_prompt(sample, transcript, include_problem_text, prompt_dir)
    result = ask(prompt)
    if result.parse_ok:
        return result
    return ask(prompt + "\n" + _FORMAT_REMINDER)
