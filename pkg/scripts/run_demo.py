#!/usr/bin/env python3
"""Run the detection pipeline on the bundled 12-sample fixture.

Uses the scripted backend shipped with the test suite, so no network
access or API key is needed. Prints the scored report for the full
pipeline, then the four-row ablation grid.
"""

import sys
from pathlib import Path

REPO_ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(REPO_ROOT / "src"))

from mathagent import (
    AblationMode,
    PhaseSetup,
    PipelineSetup,
    ScriptedBackend,
    build_report_row,
    call_counts,
    load_dataset,
    render_ablation_csv,
    render_markdown,
    run_dataset,
)

FIXTURES = REPO_ROOT / "tests" / "fixtures"


def scripted_setup() -> PipelineSetup:
    backend = ScriptedBackend.from_file(FIXTURES / "scripts_12.json")
    phase = PhaseSetup(backend=backend)
    return PipelineSetup(phase1=phase, phase2=phase, phase3=phase)


def main() -> int:
    samples = load_dataset(FIXTURES / "dataset_12.jsonl")
    print(f"loaded {len(samples)} samples from {FIXTURES / 'dataset_12.jsonl'}")

    detections = run_dataset(samples, AblationMode.FULL, scripted_setup())
    failures = [d for d in detections if d.failure is not None]
    print(f"full pipeline: {len(detections)} detections, {len(failures)} failures")
    print()
    print(render_markdown([build_report_row(detections, samples, "scripted-12")]))

    entries = []
    for mode in AblationMode:
        mode_detections = run_dataset(samples, mode, scripted_setup())
        row = build_report_row(mode_detections, samples, mode.value)
        entries.append((mode.value, row, call_counts(mode_detections)))
    print("ablation grid:")
    print(render_ablation_csv(entries), end="")
    return 0


if __name__ == "__main__":
    sys.exit(main())
