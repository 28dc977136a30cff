"""Synthetic dataset construction for tests and benchmarks.

synthetic_reference_dataset builds 2,500 samples whose per-type and
per-category counts, step-count profile (mean 7.6, min 3, max 20), and
question-length profile (mean 168.0, min 13, max 719) match the
benchmark corpus this tool is evaluated against. Construction is fully
deterministic; no randomness is involved.
"""

from __future__ import annotations

from .data_model import ErrorCategory, ImageKind, ImageRef, QuestionType, Sample

REFERENCE_TOTAL = 2500

REFERENCE_TYPE_COUNTS: dict[QuestionType, int] = {
    QuestionType.PLANE_GEOMETRY: 1559,
    QuestionType.SOLID_GEOMETRY: 191,
    QuestionType.DIAGRAM: 233,
    QuestionType.ALGEBRA: 288,
    QuestionType.MATH_COMMONSENSE: 229,
}

REFERENCE_CATEGORY_COUNTS: dict[ErrorCategory, int] = {
    ErrorCategory.VIS: 395,
    ErrorCategory.CAL: 912,
    ErrorCategory.REAS: 951,
    ErrorCategory.KNOW: 119,
    ErrorCategory.MIS: 123,
}

# a valid 1x1 transparent PNG, for samples that carry an inline image
TINY_PNG_BASE64 = (
    "iVBORw0KGgoAAAANSUhEUgAAAAEAAAABCAYAAAAfFcSJ"
    "AAAADUlEQVR42mP8z8BQDwAEhQGAhKmMIQAAAABJRU5ErkJggg=="
)


def _step_counts() -> list[int]:
    # 3 + 20 + 1491*8 + 1007*7 = 19000 over 2500 samples: mean exactly 7.6
    return [3, 20] + [8] * 1491 + [7] * 1007


def _question_lengths() -> list[int]:
    # 13 + 719 + 4*69 + 2494*168 = 420000 over 2500: mean exactly 168.0
    return [13, 719, 69, 69, 69, 69] + [168] * 2494


def _text_of_length(index: int, length: int) -> str:
    base = f"Question {index}: "
    filler = "find the value described in the figure "
    text = base + filler * (length // len(filler) + 2)
    return text[:length]


def synthetic_reference_dataset() -> list[Sample]:
    type_seq: list[QuestionType] = []
    for qtype in QuestionType:
        type_seq.extend([qtype] * REFERENCE_TYPE_COUNTS[qtype])
    cat_seq: list[ErrorCategory] = []
    for cat in ErrorCategory:
        cat_seq.extend([cat] * REFERENCE_CATEGORY_COUNTS[cat])
    steps_per_sample = _step_counts()
    lengths = _question_lengths()
    assert len(type_seq) == len(cat_seq) == REFERENCE_TOTAL
    assert len(steps_per_sample) == len(lengths) == REFERENCE_TOTAL

    samples = []
    for i in range(REFERENCE_TOTAL):
        n_steps = steps_per_sample[i]
        image = None
        if i % 5 == 0:
            image = ImageRef(
                kind=ImageKind.INLINE_BASE64,
                value=TINY_PNG_BASE64,
                media_type="image/png",
            )
        samples.append(
            Sample(
                id=f"syn{i:04d}",
                question_text=_text_of_length(i, lengths[i]),
                correct_answer=str(i),
                incorrect_answer=str(i + 1),
                steps=tuple(f"work item {j + 1}" for j in range(n_steps)),
                gt_error_step=(i * 7) % n_steps + 1,
                gt_error_category=cat_seq[i],
                image=image,
                question_type=type_seq[i],
            )
        )
    return samples
