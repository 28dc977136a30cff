"""Image-text consistency check (first pipeline phase).

When the problem text already carries everything the image shows, later
phases can skip transcription and work from the text alone.
"""

from __future__ import annotations

import string
from dataclasses import dataclass

from .backends import Backend, ImageSegment, ModelRequest, RequestSettings, TextSegment
from .data_model import Sample
from .prompts import load_prompt, render_prompt

# Tokens that flip CONSISTENT into a negative verdict when found in the
# same word ("inconsistent", "NOT_CONSISTENT") or the word just before.
NEGATION_TOKENS = ("not", "in")


@dataclass(frozen=True)
class ConsistencyVerdict:
    consistent: bool
    raw_text: str
    confidence_note: str | None = None


def parse_verdict(raw_text: str) -> bool:
    """True iff the reply affirms consistency.

    The reply is consistent when it contains the token CONSISTENT
    (case-insensitive) not negated by NOT or IN, either inside the same
    whitespace-delimited word or as the immediately preceding word.
    Anything unparseable counts as not consistent, the conservative
    default: an unverified image goes through transcription.
    """
    words = raw_text.lower().split()
    for w_i, word in enumerate(words):
        start = 0
        while True:
            idx = word.find("consistent", start)
            if idx < 0:
                break
            prefix = word[:idx]
            negated = "not" in prefix or prefix.endswith("in")
            if not negated and w_i > 0:
                prev = words[w_i - 1].strip(string.punctuation)
                if prev in NEGATION_TOKENS:
                    negated = True
            if not negated:
                return True
            start = idx + 1
    return False


def check_consistency(
    sample: Sample,
    backend: Backend,
    settings: RequestSettings = RequestSettings(),
    prompt_dir=None,
) -> ConsistencyVerdict:
    """Ask the backend whether the image adds anything beyond the text.

    A sample without an image is trivially consistent and costs zero
    backend calls.
    """
    if sample.image is None:
        return ConsistencyVerdict(
            consistent=True,
            raw_text="",
            confidence_note="no image attached; trivially consistent",
        )
    template = load_prompt("phase1_consistency", prompt_dir)
    prompt = render_prompt(template, {"question_text": sample.question_text})
    request = ModelRequest(
        model_id=settings.model_id,
        system_prompt=settings.system_prompt,
        segments=(TextSegment(prompt), ImageSegment(sample.image)),
        temperature=settings.temperature,
        max_tokens=settings.max_tokens,
        phase="phase1",
        sample_id=sample.id,
    )
    response = backend.complete(request)
    return ConsistencyVerdict(consistent=parse_verdict(response.text), raw_text=response.text)
