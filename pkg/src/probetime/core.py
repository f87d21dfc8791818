"""Domain data model shared by every other module.

Checkpoint references, probe task descriptors, per-checkpoint evaluation
records, and the score series that all dynamics metrics consume.  Values are
stored as 64-bit reals; the series file format is CSV with header
``task_id,run_tag,step,value``, UTF-8, LF line endings, values printed with
17 significant digits (enough to round-trip any float64 bit-exactly).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

from .errors import ContractViolation, DuplicateCheckpoint, NoData, ParseError

PROBE_FAMILIES = (
    "minimal_pair",
    "cloze",
    "multichoice",
    "token_label",
    "segmentation",
    "arc_pred",
    "arc_class",
)

METRICS = ("accuracy", "precision_at_k", "span_f1")

# Natural metric for each probe family; used when a task spec omits `metric`.
DEFAULT_METRIC = {
    "minimal_pair": "accuracy",
    "cloze": "precision_at_k",
    "multichoice": "accuracy",
    "token_label": "accuracy",
    "segmentation": "span_f1",
    "arc_pred": "accuracy",
    "arc_class": "accuracy",
}

# Test equality for stored metric values means |a - b| <= VALUE_TOLERANCE.
VALUE_TOLERANCE = 1e-12

SERIES_CSV_HEADER = ("task_id", "run_tag", "step", "value")


@dataclass(frozen=True)
class CheckpointRef:
    """A saved intermediate parameter state of one pretraining run."""

    step: int
    locator: str
    run_tag: str
    seed: int

    def __post_init__(self):
        if self.step < 0:
            raise ContractViolation(f"checkpoint step must be non-negative, got {self.step}")


@dataclass(frozen=True)
class ProbeTaskSpec:
    """Descriptor of one probe task: family, dataset location, metric, knobs."""

    task_id: str
    family: str
    dataset_locator: str
    metric: str = ""
    params: Mapping = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "params", MappingProxyType(dict(self.params)))
        if self.family not in PROBE_FAMILIES:
            raise ContractViolation(f"unknown probe family '{self.family}'")
        metric = self.metric or DEFAULT_METRIC[self.family]
        object.__setattr__(self, "metric", metric)
        if metric not in METRICS:
            raise ContractViolation(f"unknown metric '{metric}'")
        if metric == "precision_at_k" and self.family != "cloze":
            raise ContractViolation("precision_at_k is only valid for cloze tasks")
        if metric == "span_f1" and self.family != "segmentation":
            raise ContractViolation("span_f1 is only valid for segmentation tasks")
        k = self.params.get("k")
        if k is not None and (not isinstance(k, int) or k < 1):
            raise ContractViolation(f"k must be a positive integer, got {k!r}")

    @property
    def k(self) -> int:
        return int(self.params.get("k", 1))


@dataclass(frozen=True)
class EvalRecord:
    """Result of evaluating one task on one checkpoint."""

    task_id: str
    checkpoint_step: int
    metric_value: float
    n_items: int
    n_skipped: int = 0

    def __post_init__(self):
        if not (0.0 <= self.metric_value <= 1.0):
            raise ContractViolation(
                f"metric value {self.metric_value} outside [0, 1] for '{self.task_id}'"
            )
        if self.n_items < 1:
            raise ContractViolation("a record with zero scored items is an error, not a record")
        if self.n_skipped < 0:
            raise ContractViolation("n_skipped must be non-negative")


@dataclass(frozen=True)
class ScoreSeries:
    """Ordered (step, value) points for one task across checkpoints of one run.

    ``smoothed`` marks the output of EMA smoothing; threshold metrics refuse
    smoothed input so that learning-progress numbers are always computed on
    raw values.
    """

    task_id: str
    run_tag: str
    points: tuple[tuple[int, float], ...]
    smoothed: bool = False

    def __post_init__(self):
        points = tuple((int(s), float(v)) for s, v in self.points)
        object.__setattr__(self, "points", points)
        if not points:
            raise ContractViolation("a score series must contain at least one point")
        steps = [s for s, _ in points]
        for prev, cur in zip(steps, steps[1:]):
            if cur <= prev:
                raise ContractViolation(
                    f"series steps must be strictly increasing, got {prev} then {cur}"
                )
        for s, v in points:
            if not math.isfinite(v):
                raise ContractViolation(f"non-finite value {v} at step {s}")

    @property
    def steps(self) -> tuple[int, ...]:
        return tuple(s for s, _ in self.points)

    @property
    def values(self) -> tuple[float, ...]:
        return tuple(v for _, v in self.points)

    def value_at(self, step: int) -> float:
        for s, v in self.points:
            if s == step:
                return v
        raise KeyError(step)

    def approx_equal(self, other: "ScoreSeries", tol: float = VALUE_TOLERANCE) -> bool:
        return (
            self.task_id == other.task_id
            and self.run_tag == other.run_tag
            and self.smoothed == other.smoothed
            and self.steps == other.steps
            and all(abs(a - b) <= tol for a, b in zip(self.values, other.values))
        )


def assemble_series(records: Iterable[EvalRecord], task_id: str, run_tag: str) -> ScoreSeries:
    """Sort records by checkpoint step into a ScoreSeries.

    Pure function of the input multiset: any permutation of the same records
    yields the same series.  Duplicate steps are an error rather than
    last-writer-wins, to surface misconfigured runs early.
    """
    records = list(records)
    if not records:
        raise NoData(f"no records for task '{task_id}'")
    for rec in records:
        if rec.task_id != task_id:
            raise ContractViolation(
                f"record for task '{rec.task_id}' mixed into series '{task_id}'"
            )
    seen: set[int] = set()
    for rec in records:
        if rec.checkpoint_step in seen:
            raise DuplicateCheckpoint(
                f"step {rec.checkpoint_step} appears twice for task '{task_id}'"
            )
        seen.add(rec.checkpoint_step)
    points = sorted((rec.checkpoint_step, rec.metric_value) for rec in records)
    return ScoreSeries(task_id=task_id, run_tag=run_tag, points=tuple(points))


def _format_value(value: float) -> str:
    return format(float(value), ".17g")


def serialize_series(series: ScoreSeries) -> bytes:
    """Encode a series as the CSV format described in the module docstring."""
    if series.smoothed:
        raise ContractViolation("smoothed series are plot-time artifacts and are not persisted")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SERIES_CSV_HEADER)
    for step, value in series.points:
        writer.writerow([series.task_id, series.run_tag, step, _format_value(value)])
    return buf.getvalue().encode("utf-8")


def deserialize_series(data: bytes) -> ScoreSeries:
    """Parse one series back from its CSV encoding.

    The file must contain a single (task_id, run_tag) pair with rows already
    in strictly increasing step order; anything else is malformed input, not
    something to repair silently.
    """
    rows = _parse_series_rows(data)
    if not rows:
        raise ParseError("series file contains no data rows", line=2)
    task_id, run_tag = rows[0][0], rows[0][1]
    points = []
    for i, (tid, tag, step, value) in enumerate(rows):
        line = i + 2
        if tid != task_id:
            raise ParseError(f"mixed task ids '{task_id}' and '{tid}'", line=line, field="task_id")
        if tag != run_tag:
            raise ParseError(f"mixed run tags '{run_tag}' and '{tag}'", line=line, field="run_tag")
        if points and step <= points[-1][0]:
            raise ParseError(
                f"steps not strictly increasing: {points[-1][0]} then {step}", line=line, field="step"
            )
        points.append((step, value))
    return ScoreSeries(task_id=task_id, run_tag=run_tag, points=tuple(points))


def _parse_series_rows(data: bytes) -> list[tuple[str, str, int, float]]:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"series file is not valid UTF-8: {exc}") from exc
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty series file", line=1) from None
    if tuple(header) != SERIES_CSV_HEADER:
        raise ParseError(f"bad header {header!r}", line=1)
    rows = []
    for i, row in enumerate(reader):
        line = i + 2
        if not row:
            continue
        if len(row) != 4:
            raise ParseError(f"expected 4 fields, got {len(row)}", line=line)
        tid, tag, step_s, value_s = row
        try:
            step = int(step_s)
        except ValueError:
            raise ParseError(f"bad step {step_s!r}", line=line, field="step") from None
        try:
            value = float(value_s)
        except ValueError:
            raise ParseError(f"bad value {value_s!r}", line=line, field="value") from None
        if not math.isfinite(value):
            raise ParseError(f"non-finite value {value_s!r}", line=line, field="value")
        rows.append((tid, tag, step, value))
    return rows


def write_record_rows(path, rows: Iterable[tuple[str, str, int, float]], append: bool = False) -> None:
    """Write/append (task_id, run_tag, step, value) rows in the series CSV format."""
    rows = list(rows)
    mode = "a" if append else "w"
    import os

    write_header = not append or not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, mode, encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if write_header:
            writer.writerow(SERIES_CSV_HEADER)
        for task_id, run_tag, step, value in rows:
            writer.writerow([task_id, run_tag, step, _format_value(value)])


def read_record_rows(path) -> list[tuple[str, str, int, float]]:
    """Read a (possibly multi-task, multi-run) records CSV."""
    with open(path, "rb") as fh:
        return _parse_series_rows(fh.read())


def series_from_rows(rows: Sequence[tuple[str, str, int, float]]) -> list[ScoreSeries]:
    """Group raw CSV rows into one ScoreSeries per (task_id, run_tag)."""
    grouped: dict[tuple[str, str], list[tuple[int, float]]] = {}
    for task_id, run_tag, step, value in rows:
        grouped.setdefault((task_id, run_tag), []).append((step, value))
    out = []
    for (task_id, run_tag), points in sorted(grouped.items()):
        seen = set()
        for step, _ in points:
            if step in seen:
                raise DuplicateCheckpoint(
                    f"step {step} appears twice for task '{task_id}' run '{run_tag}'"
                )
            seen.add(step)
        out.append(ScoreSeries(task_id=task_id, run_tag=run_tag, points=tuple(sorted(points))))
    return out
