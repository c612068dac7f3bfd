"""Reconstruction quality metrics: SSE and percentile-threshold CAX.

CAX asks: of the cells whose value exceeds the X-th percentile, how many
does the reconstruction get right?  The threshold is the nearest-rank
percentile of the truth map's free-cell values and is applied to both
maps, so a perfect reconstruction always scores 1.0.  Positivity is
strict (value > threshold), which keeps the score invariant under any
strictly monotone transform applied to both maps.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .grid import GridMap, ObstacleMask

CAX_LEVELS = (50, 80, 90, 95, 99)

TIMELINE_HEADER = ("round", "sse") + tuple(f"ca{x}" for x in CAX_LEVELS)


def _check_specs(estimate: GridMap, truth: GridMap, mask: ObstacleMask) -> None:
    if estimate.spec != truth.spec or truth.spec != mask.spec:
        raise ValidationError("estimate, truth and mask must share a grid spec")


def sse(estimate: GridMap, truth: GridMap, mask: ObstacleMask) -> float:
    """Sum of squared error over free cells."""
    _check_specs(estimate, truth, mask)
    diff = estimate.values[mask.free] - truth.values[mask.free]
    return float(np.sum(diff * diff))


def nearest_rank_threshold(values: np.ndarray, percentile: float) -> float:
    """Nearest-rank percentile: the ceil(X/100 * n)-th smallest value."""
    if not 0 < percentile < 100:
        raise ValidationError("percentile must lie in (0, 100)")
    flat = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if flat.size == 0:
        raise ValidationError("cannot take a percentile of an empty array")
    rank = math.ceil(percentile / 100.0 * flat.size)
    return float(flat[rank - 1])


@dataclass(frozen=True)
class ThresholdStats:
    """Cellwise confusion counts above one percentile threshold."""

    threshold_percentile: float
    threshold_value: float
    tp: int
    fp: int
    fn: int

    @property
    def cax(self) -> float:
        denom = self.tp + self.fp + self.fn
        if denom == 0:
            return 1.0
        return self.tp / denom


def cax(
    estimate: GridMap, truth: GridMap, percentile: float, mask: ObstacleMask
) -> ThresholdStats:
    """Critical success index at the given truth percentile."""
    _check_specs(estimate, truth, mask)
    truth_vals = truth.values[mask.free]
    est_vals = estimate.values[mask.free]
    t = nearest_rank_threshold(truth_vals, percentile)
    truth_pos = truth_vals > t
    est_pos = est_vals > t
    tp = int(np.sum(truth_pos & est_pos))
    fp = int(np.sum(~truth_pos & est_pos))
    fn = int(np.sum(truth_pos & ~est_pos))
    return ThresholdStats(
        threshold_percentile=percentile, threshold_value=t, tp=tp, fp=fp, fn=fn
    )


@dataclass(frozen=True)
class TimelineRow:
    round_index: int
    sse: float
    cax_by_level: dict[int, float]

    def as_csv_row(self) -> list:
        return [self.round_index, repr(self.sse)] + [
            repr(self.cax_by_level[x]) for x in CAX_LEVELS
        ]


@dataclass
class MetricTimeline:
    """Per-round metric rows for one episode."""

    rows: list[TimelineRow]

    def row_for(self, round_index: int) -> TimelineRow:
        for row in self.rows:
            if row.round_index == round_index:
                return row
        raise KeyError(round_index)

    def save_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(TIMELINE_HEADER)
            for row in self.rows:
                writer.writerow(row.as_csv_row())

    @classmethod
    def load_csv(cls, path) -> "MetricTimeline":
        rows = []
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if tuple(header) != TIMELINE_HEADER:
                raise ValidationError(f"unexpected timeline header {header}")
            for rec in reader:
                rows.append(
                    TimelineRow(
                        round_index=int(rec[0]),
                        sse=float(rec[1]),
                        cax_by_level={
                            x: float(v) for x, v in zip(CAX_LEVELS, rec[2:])
                        },
                    )
                )
        return cls(rows=rows)


def evaluate_snapshot(
    estimate: GridMap, truth: GridMap, mask: ObstacleMask, round_index: int
) -> TimelineRow:
    return TimelineRow(
        round_index=round_index,
        sse=sse(estimate, truth, mask),
        cax_by_level={
            x: cax(estimate, truth, float(x), mask).cax for x in CAX_LEVELS
        },
    )


def timeline_from_trace(trace, truth: GridMap, mask: ObstacleMask) -> MetricTimeline:
    """Evaluate every reconstruction snapshot a trace carries, in round order."""
    rows = [
        evaluate_snapshot(trace.snapshots[k].estimate, truth, mask, k)
        for k in sorted(trace.snapshots)
    ]
    return MetricTimeline(rows=rows)
