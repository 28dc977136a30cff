"""Prompt asset loading and {{placeholder}} rendering."""

from __future__ import annotations

import re
from pathlib import Path

PROMPT_FILES = {
    "phase1_consistency": "phase1_consistency.prompt",
    "phase2_question_type": "phase2_question_type.prompt",
    "phase2_formal": "phase2_formal.prompt",
    "phase2_latex": "phase2_latex.prompt",
    "phase2_caption": "phase2_caption.prompt",
    "phase3_analyzer": "phase3_analyzer.prompt",
}

_PACKAGED_DIR = Path(__file__).parent / "prompts"
_PLACEHOLDER_RE = re.compile(r"\{\{([a-z_]+)\}\}")


def prompt_path(name: str, prompt_dir=None) -> Path:
    try:
        filename = PROMPT_FILES[name]
    except KeyError:
        raise KeyError(f"unknown prompt asset {name!r}") from None
    base = Path(prompt_dir) if prompt_dir is not None else _PACKAGED_DIR
    return base / filename


def load_prompt(name: str, prompt_dir=None) -> str:
    return prompt_path(name, prompt_dir).read_text(encoding="utf-8")


def missing_prompt_assets(prompt_dir=None) -> list[str]:
    """Paths of prompt assets that do not exist; empty means all present."""
    return [
        str(prompt_path(name, prompt_dir))
        for name in PROMPT_FILES
        if not prompt_path(name, prompt_dir).is_file()
    ]


def render_prompt(template: str, values: dict[str, str]) -> str:
    """Substitute every {{name}}; unresolved placeholders are an error."""

    def replace(match: re.Match) -> str:
        key = match.group(1)
        if key not in values:
            raise ValueError(f"prompt placeholder {{{{{key}}}}} has no value")
        return values[key]

    return _PLACEHOLDER_RE.sub(replace, template)
