"""Report assembly: curves, progress tables, phases, package means,
baseline references and the correlation matrix, as one JSON document.

Sections are keyed by run tag; series from different runs are never merged.
The only non-deterministic content lives in the metadata section, which
reproducibility comparisons exclude.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .core import ScoreSeries
from .dynamics import (
    DEFAULT_EMA_COEFFICIENT,
    DEFAULT_EPSILON,
    DEFAULT_X_LIST,
    correlation_matrix,
    ema,
    epsilon_phase,
    learning_progress,
)
from .errors import UndefinedThreshold

SCHEMA_VERSION = 1

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AnalysisSettings:
    x_list: tuple[float, ...] = DEFAULT_X_LIST
    epsilon: float = DEFAULT_EPSILON
    ema_coefficient: float = DEFAULT_EMA_COEFFICIENT


def _curve_payload(series: ScoreSeries, coefficient: float) -> dict:
    smoothed = ema(series, coefficient)
    return {
        "steps": list(series.steps),
        "raw": list(series.values),
        "smoothed": list(smoothed.values),
    }


def _progress_payload(series: ScoreSeries, x_list: Sequence[float]) -> dict:
    rows = {}
    for x in x_list:
        try:
            lp = learning_progress(series, x)
        except UndefinedThreshold:
            rows[str(x)] = None
            continue
        rows[str(x)] = {
            "step_at_x": lp.step_at_x,
            "max_value": lp.max_value,
            "max_step": lp.max_step,
        }
    return rows


def _phase_payload(series: ScoreSeries, epsilon: float) -> dict | None:
    try:
        phase = epsilon_phase(series, epsilon)
    except UndefinedThreshold:
        return None
    return {
        "epsilon": phase.epsilon,
        "start_step": phase.start_step,
        "end_step": phase.end_step,
        "interval": phase.interval,
    }


def package_mean_series(members: Sequence[ScoreSeries], package: str, run_tag: str) -> ScoreSeries | None:
    """Unweighted per-step mean over member tasks at their shared steps."""
    shared = set(members[0].steps)
    for series in members[1:]:
        shared &= set(series.steps)
    if not shared:
        log.warning("package '%s' (run '%s') has no shared steps; omitted", package, run_tag)
        return None
    points = tuple(
        (step, sum(s.value_at(step) for s in members) / len(members))
        for step in sorted(shared)
    )
    return ScoreSeries(task_id=f"package:{package}", run_tag=run_tag, points=points)


def assemble_report(
    series: Iterable[ScoreSeries],
    packages: Mapping[str, str],
    baselines: Mapping[str, Mapping[str, Mapping[str, float]]],
    settings: AnalysisSettings,
    baseline_notes: Mapping[str, str] | None = None,
) -> dict:
    """Build the report dict.

    series: raw per-task trajectories (any number of run tags).
    packages: task_id -> package name.
    baselines: run_tag -> task_id -> {baseline kind: value}.
    """
    by_run: dict[str, list[ScoreSeries]] = {}
    for s in series:
        if s.smoothed:
            raise UndefinedThreshold("reports are assembled from raw series only")
        by_run.setdefault(s.run_tag, []).append(s)

    curves: dict = {}
    progress: dict = {}
    phases: dict = {}
    package_means: dict = {}
    correlation: dict = {}

    for run_tag in sorted(by_run):
        run_series = sorted(by_run[run_tag], key=lambda s: s.task_id)
        curves[run_tag] = {s.task_id: _curve_payload(s, settings.ema_coefficient) for s in run_series}
        progress[run_tag] = {s.task_id: _progress_payload(s, settings.x_list) for s in run_series}
        phases[run_tag] = {s.task_id: _phase_payload(s, settings.epsilon) for s in run_series}

        grouped: dict[str, list[ScoreSeries]] = {}
        for s in run_series:
            package = packages.get(s.task_id, s.task_id)
            grouped.setdefault(package, []).append(s)
        means = {}
        for package in sorted(grouped):
            members = grouped[package]
            if not members:
                log.warning("package '%s' has no member series; omitted", package)
                continue
            mean_series = package_mean_series(members, package, run_tag)
            if mean_series is not None:
                means[package] = {
                    "members": [s.task_id for s in members],
                    **_curve_payload(mean_series, settings.ema_coefficient),
                }
        package_means[run_tag] = means

        matrix = correlation_matrix(run_series)
        correlation[run_tag] = {
            "task_ids": list(matrix.task_ids),
            "tau": [list(row) for row in matrix.tau],
        }

    report = {
        "schema_version": SCHEMA_VERSION,
        "metadata": {
            "created_at": datetime.now(timezone.utc).isoformat(),
            "settings": {
                "x_list": list(settings.x_list),
                "epsilon": settings.epsilon,
                "ema_coefficient": settings.ema_coefficient,
            },
        },
        "curves": curves,
        "learning_progress": progress,
        "phases": phases,
        "package_means": package_means,
        "baselines": {
            run_tag: {task: dict(kinds) for task, kinds in sorted(tasks.items())}
            for run_tag, tasks in sorted(baselines.items())
        },
        "correlation": correlation,
    }
    if baseline_notes:
        report["baselines"]["notes"] = dict(sorted(baseline_notes.items()))
    return report


def write_report(path, report: dict) -> None:
    Path(path).write_text(
        json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8"
    )


def report_without_metadata(report: dict) -> dict:
    return {k: v for k, v in report.items() if k != "metadata"}
