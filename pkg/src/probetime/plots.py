"""SVG line charts for the analyze report.

One figure per task and one per package: the raw trajectory in a light
line, the EMA-smoothed curve on top, dashed horizontal baseline references,
and horizontal learning-progress bars along the bottom showing how far into
training each x% threshold was reached.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "probetime"

import matplotlib.pyplot as plt

_BAR_COLORS = ("#6a51a3", "#9e9ac8", "#cbc9e2")
_BASELINE_COLORS = ("#d62728", "#2ca02c", "#8c564b", "#e377c2", "#7f7f7f")


def _sanitize(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_" else "_" for c in name)


def plot_curve(
    path,
    title: str,
    steps: Sequence[int],
    raw: Sequence[float],
    smoothed: Sequence[float],
    progress_bars: Mapping[str, int] | None = None,
    baselines: Mapping[str, float] | None = None,
    ylabel: str = "score",
) -> Path:
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    ax.plot(steps, raw, color="#b0c4de", linewidth=1.0, label="raw")
    ax.plot(steps, smoothed, color="#1f4e8c", linewidth=1.8, label="EMA")

    for color, (name, value) in zip(_BASELINE_COLORS, sorted((baselines or {}).items())):
        ax.axhline(value, linestyle="--", linewidth=1.0, color=color, label=name)

    top = max(list(raw) + [v for v in (baselines or {}).values()] or [1.0])
    bottom = min(list(raw) + [0.0])
    span = max(top - bottom, 1e-9)
    if progress_bars:
        bar_height = 0.05 * span
        for i, (label, step_at_x) in enumerate(sorted(progress_bars.items(), reverse=True)):
            y = bottom - (i + 1) * bar_height
            ax.hlines(y, 0, step_at_x, linewidth=4.0, color=_BAR_COLORS[i % len(_BAR_COLORS)])
            ax.annotate(
                f"LP-{label}%", (step_at_x, y), textcoords="offset points",
                xytext=(4, -3), fontsize=7,
            )
        ax.set_ylim(bottom - (len(progress_bars) + 1) * bar_height, top + 0.05 * span)

    ax.set_xlabel("parameter updates")
    ax.set_ylabel(ylabel)
    ax.set_title(title, fontsize=10)
    ax.legend(fontsize=7, loc="lower right")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def render_report_plots(report: dict, out_dir) -> list[Path]:
    """Emit one SVG per task and one per package for every run in a report."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for run_tag, tasks in report["curves"].items():
        run_baselines = report.get("baselines", {}).get(run_tag, {})
        for task_id, curve in tasks.items():
            lp_rows = report["learning_progress"][run_tag].get(task_id) or {}
            progress_bars = {
                x: row["step_at_x"] for x, row in lp_rows.items() if row is not None
            }
            name = f"{_sanitize(run_tag)}__task__{_sanitize(task_id)}.svg"
            written.append(
                plot_curve(
                    out_dir / name,
                    f"{task_id} ({run_tag})",
                    curve["steps"],
                    curve["raw"],
                    curve["smoothed"],
                    progress_bars=progress_bars,
                    baselines=run_baselines.get(task_id, {}),
                )
            )
        for package, curve in report["package_means"].get(run_tag, {}).items():
            name = f"{_sanitize(run_tag)}__package__{_sanitize(package)}.svg"
            written.append(
                plot_curve(
                    out_dir / name,
                    f"package mean: {package} ({run_tag})",
                    curve["steps"],
                    curve["raw"],
                    curve["smoothed"],
                )
            )
    return written
