"""Scoring and trajectory statistics: embedding similarity score, its
baseline-normalized form, pass rate, and invalid rate."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from .backends import Backend, cosine
from .errors import CloudRcaError
from .trajectory import AnalysisResult, RESULT_FIELDS, Trajectory, UNCLEAR

BASELINE_TEXT = UNCLEAR


class NotComputable(CloudRcaError):
    """A metric is undefined for the given inputs."""


def emb_score(prediction: str, reference: str, backend: Backend) -> float:
    """(1 + cosine similarity of the embeddings) / 2, in [0, 1]."""
    vectors = backend.embed([prediction, reference])
    return (1.0 + cosine(vectors[0], vectors[1])) / 2.0


def norm_score(
    score_fn: Callable[[str, str], float],
    prediction: str,
    reference: str,
    baseline: str = BASELINE_TEXT,
) -> float:
    """Rescale a similarity score so the baseline maps to 0 and a perfect
    prediction to 1; worse-than-baseline predictions go negative."""
    baseline_score = score_fn(baseline, reference)
    if baseline_score >= 1.0:
        raise NotComputable("baseline scores 1.0 against the reference")
    return (score_fn(prediction, reference) - baseline_score) / (1.0 - baseline_score)


def fill_baseline(result: Optional[AnalysisResult]) -> AnalysisResult:
    """Failed or incomplete results degrade to the baseline text per field."""
    if result is None:
        return AnalysisResult()
    filled = {}
    for name in RESULT_FIELDS:
        value = result.field_text(name)
        filled[name] = value if value and value.strip() else UNCLEAR
    return AnalysisResult(**filled)


def pass_rate(trajectories: Sequence[Trajectory]) -> float:
    if not trajectories:
        raise NotComputable("pass rate of an empty trajectory set")
    return 100.0 * sum(1 for t in trajectories if t.passed) / len(trajectories)


def invalid_rate(trajectories: Sequence[Trajectory]) -> float:
    """Mean across trajectories of the per-trajectory invalid-step ratio."""
    if not trajectories:
        raise NotComputable("invalid rate of an empty trajectory set")
    ratios = [t.invalid_ratio() for t in trajectories]
    return 100.0 * sum(ratios) / len(ratios)


def mean_trajectory_length(trajectories: Sequence[Trajectory]) -> float:
    if not trajectories:
        raise NotComputable("mean length of an empty trajectory set")
    return sum(len(t.steps) for t in trajectories) / len(trajectories)


@dataclass
class JobOutcome:
    job_id: str
    trajectory: Trajectory
    prediction: AnalysisResult
    reference: Optional[AnalysisResult] = None


def build_report(outcomes: Sequence[JobOutcome], backend: Backend) -> dict:
    """Summary statistics plus per-job rows, JSON-serializable."""
    trajectories = [o.trajectory for o in outcomes]
    report = {
        "pass_rate": pass_rate(trajectories),
        "invalid_rate": invalid_rate(trajectories),
        "mean_trajectory_length": mean_trajectory_length(trajectories),
        "jobs": [],
        "fields": {},
    }
    scored = [o for o in outcomes if o.reference is not None]
    for name in RESULT_FIELDS:
        if name == "responsibility":
            if scored:
                correct = sum(
                    1
                    for o in scored
                    if fill_baseline(o.prediction).responsibility
                    == o.reference.responsibility
                )
                report["fields"][name] = {"precision": 100.0 * correct / len(scored)}
            continue
        emb_values, norm_values = [], []
        for o in scored:
            prediction = fill_baseline(o.prediction).field_text(name)
            reference = o.reference.field_text(name)
            score = emb_score(prediction, reference, backend)
            emb_values.append(score)
            try:
                norm_values.append(
                    norm_score(
                        lambda p, r: emb_score(p, r, backend), prediction, reference
                    )
                )
            except NotComputable:
                pass
        if emb_values:
            report["fields"][name] = {
                "emb_score": sum(emb_values) / len(emb_values),
                "norm_score": (
                    sum(norm_values) / len(norm_values) if norm_values else None
                ),
            }
    for o in outcomes:
        report["jobs"].append(
            {
                "job_id": o.job_id,
                "passed": o.trajectory.passed,
                "steps": len(o.trajectory.steps),
                "invalid_ratio": o.trajectory.invalid_ratio(),
                "prediction": fill_baseline(o.prediction).to_dict(),
                "reference": o.reference.to_dict() if o.reference else None,
            }
        )
    return report


def export_predictions(outcomes: Sequence[JobOutcome], path: str):
    """Comparison-ready predictions file: one JSONL row per job and field."""
    with open(path, "w", encoding="utf-8") as fh:
        for o in outcomes:
            if o.reference is None:
                continue
            prediction = fill_baseline(o.prediction)
            for name in RESULT_FIELDS:
                fh.write(
                    json.dumps(
                        {
                            "job_id": o.job_id,
                            "field": name,
                            "prediction": prediction.field_text(name),
                            "reference": o.reference.field_text(name),
                        },
                        sort_keys=True,
                    )
                    + "\n"
                )
