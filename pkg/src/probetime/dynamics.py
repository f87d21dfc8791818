"""Learning-dynamics metrics over score series.

Threshold metrics (learning progress, learning-phase intervals) select
existing checkpoint steps and never interpolate, and they operate on raw
values only: smoothed series are rejected structurally.  Rank correlation is
the tie-corrected Kendall tau-b, computed over the steps two series share.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .core import ScoreSeries
from .errors import (
    ContractViolation,
    InsufficientOverlap,
    SmoothedInputError,
    UndefinedThreshold,
)

DEFAULT_X_LIST = (90, 95, 97)
DEFAULT_EPSILON = 0.05
DEFAULT_EMA_COEFFICIENT = 0.5


@dataclass(frozen=True)
class LearningProgress:
    """Earliest step at which a series reaches x% of its trajectory maximum."""

    task_id: str
    x: float
    step_at_x: int
    max_value: float
    max_step: int


@dataclass(frozen=True)
class PhaseReport:
    """Interval between first reaching eps*max and first reaching (1-eps)*max."""

    task_id: str
    epsilon: float
    start_step: int
    end_step: int

    @property
    def interval(self) -> int:
        return self.end_step - self.start_step

    def __post_init__(self):
        if self.start_step > self.end_step:
            raise ContractViolation("phase start after phase end")


@dataclass(frozen=True)
class CorrelationMatrix:
    """Pairwise tau-b over task series; None marks undefined cells."""

    task_ids: tuple[str, ...]
    tau: tuple[tuple[float | None, ...], ...]


def _reject_smoothed(series: ScoreSeries, metric: str) -> None:
    if series.smoothed:
        raise SmoothedInputError(f"{metric} is defined on raw series only")


def _series_max(series: ScoreSeries) -> tuple[float, int]:
    max_value = max(series.values)
    if max_value <= 0.0:
        raise UndefinedThreshold(
            f"series '{series.task_id}' has maximum {max_value}; a relative "
            "threshold is meaningless for non-positive maxima"
        )
    max_step = next(s for s, v in series.points if v == max_value)
    return max_value, max_step


def _first_step_reaching(series: ScoreSeries, threshold: float) -> int:
    for step, value in series.points:
        if value >= threshold:
            return step
    raise AssertionError("unreachable: the maximum itself meets any threshold <= max")


def learning_progress(series: ScoreSeries, x: float) -> LearningProgress:
    """Smallest step whose raw value reaches (x/100) of the series maximum.

    Always exists since the maximum itself qualifies; when the maximum sits at
    the first checkpoint (the random-initialization case) the answer is the
    first step for every x.
    """
    _reject_smoothed(series, "learning_progress")
    if not (0.0 < x <= 100.0):
        raise ContractViolation(f"x must be in (0, 100], got {x}")
    max_value, max_step = _series_max(series)
    step = _first_step_reaching(series, (x / 100.0) * max_value)
    return LearningProgress(
        task_id=series.task_id, x=x, step_at_x=step, max_value=max_value, max_step=max_step
    )


def epsilon_phase(series: ScoreSeries, epsilon: float) -> PhaseReport:
    """Phase between first reaching eps*max and first reaching (1-eps)*max."""
    _reject_smoothed(series, "epsilon_phase")
    if not (0.0 <= epsilon < 0.5):
        raise ContractViolation(f"epsilon must be in [0, 0.5), got {epsilon}")
    max_value, _ = _series_max(series)
    start = _first_step_reaching(series, epsilon * max_value)
    end = _first_step_reaching(series, (1.0 - epsilon) * max_value)
    return PhaseReport(task_id=series.task_id, epsilon=epsilon, start_step=start, end_step=end)


def ema(series: ScoreSeries, c: float) -> ScoreSeries:
    """Exponential moving average for plotting: s_0 = v_0, s_t = c*v_t + (1-c)*s_{t-1}.

    The result is flagged as smoothed; threshold metrics reject it.
    """
    if not (0.0 < c <= 1.0):
        raise ContractViolation(f"EMA coefficient must be in (0, 1], got {c}")
    smoothed = []
    prev = None
    for step, value in series.points:
        prev = value if prev is None else c * value + (1.0 - c) * prev
        smoothed.append((step, prev))
    return ScoreSeries(
        task_id=series.task_id, run_tag=series.run_tag, points=tuple(smoothed), smoothed=True
    )


def _merge_count_inversions(ys: list[float]) -> int:
    """Count pairs i < j with ys[i] > ys[j] via mergesort; O(n log n)."""
    n = len(ys)
    if n < 2:
        return 0
    mid = n // 2
    left, right = ys[:mid], ys[mid:]
    inv = _merge_count_inversions(left) + _merge_count_inversions(right)
    merged = []
    i = j = 0
    while i < len(left) and j < len(right):
        if left[i] <= right[j]:
            merged.append(left[i])
            i += 1
        else:
            # left[i..] are all > right[j]
            inv += len(left) - i
            merged.append(right[j])
            j += 1
    merged.extend(left[i:])
    merged.extend(right[j:])
    ys[:] = merged
    return inv


def _tie_pairs(values: Sequence[float]) -> int:
    counts: dict[float, int] = {}
    for v in values:
        counts[v] = counts.get(v, 0) + 1
    return sum(c * (c - 1) // 2 for c in counts.values())


def kendall_tau(a: ScoreSeries, b: ScoreSeries) -> float:
    """Tie-corrected Kendall tau-b over the checkpoint steps both series share.

    Returns NaN when either restricted series has zero variance (the
    correlation is undefined there and surfaces as a null matrix entry).
    """
    common = sorted(set(a.steps) & set(b.steps))
    if len(common) < 2:
        raise InsufficientOverlap(
            f"series '{a.task_id}' and '{b.task_id}' share only {len(common)} steps"
        )
    xs = [a.value_at(s) for s in common]
    ys = [b.value_at(s) for s in common]
    if len(set(xs)) == 1 or len(set(ys)) == 1:
        return math.nan

    n = len(common)
    tot = n * (n - 1) // 2
    xtie = _tie_pairs(xs)
    ytie = _tie_pairs(ys)
    xytie = _tie_pairs([(x, y) for x, y in zip(xs, ys)])  # type: ignore[arg-type]

    # Sort lexicographically by (x, y); y-inversions in that order are exactly
    # the discordant pairs (x-ties contribute none, y-ties are non-strict).
    order = sorted(range(n), key=lambda i: (xs[i], ys[i]))
    discordant = _merge_count_inversions([ys[i] for i in order])

    con_minus_dis = tot - xtie - ytie + xytie - 2 * discordant
    # single sqrt of the integer product so that self-correlation of a
    # tie-heavy series is exactly 1.0 (perfect squares root exactly)
    denom = math.sqrt((tot - xtie) * (tot - ytie))
    return con_minus_dis / denom


def correlation_matrix(series_list: Sequence[ScoreSeries]) -> CorrelationMatrix:
    """Symmetric tau-b matrix across tasks; undefined cells become None."""
    n = len(series_list)
    cells: list[list[float | None]] = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(i, n):
            try:
                tau = kendall_tau(series_list[i], series_list[j])
            except InsufficientOverlap:
                tau = math.nan
            cell = None if math.isnan(tau) else tau
            cells[i][j] = cell
            cells[j][i] = cell
    return CorrelationMatrix(
        task_ids=tuple(s.task_id for s in series_list),
        tau=tuple(tuple(row) for row in cells),
    )
