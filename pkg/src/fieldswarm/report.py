"""Figure rendering for run outputs.

Consumes the delimited files a run directory already contains (per-episode
timeline CSVs plus aggregate.csv) and renders PNG figures next to them:
mean CAX curves per strategy, and SSE percentile bands (median, IQR,
5-95%) over rounds.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .errors import ValidationError
from .metrics import CAX_LEVELS, MetricTimeline

SSE_BAND_PERCENTILES = (5.0, 25.0, 50.0, 75.0, 95.0)


def load_timeline_groups(run_dir) -> dict[str, list[MetricTimeline]]:
    """Timelines grouped by strategy directory name under run_dir/timelines."""
    base = Path(run_dir) / "timelines"
    if not base.is_dir():
        raise ValidationError(f"{base} does not exist; not a run directory?")
    groups: dict[str, list[MetricTimeline]] = {}
    for strategy_dir in sorted(p for p in base.iterdir() if p.is_dir()):
        timelines = [
            MetricTimeline.load_csv(p) for p in sorted(strategy_dir.glob("*.csv"))
        ]
        if timelines:
            groups[strategy_dir.name] = timelines
    if not groups:
        # flat layout: timelines/ holds the CSVs of a single-strategy run
        timelines = [MetricTimeline.load_csv(p) for p in sorted(base.glob("*.csv"))]
        if timelines:
            groups["run"] = timelines
    if not groups:
        raise ValidationError(f"no timeline CSVs found under {base}")
    return groups


def _common_rounds(timelines: list[MetricTimeline]) -> list[int]:
    rounds = set(r.round_index for r in timelines[0].rows)
    for tl in timelines[1:]:
        rounds &= set(r.round_index for r in tl.rows)
    if not rounds:
        raise ValidationError("timelines share no common rounds")
    return sorted(rounds)


def _metric_matrix(
    timelines: list[MetricTimeline], rounds: list[int], metric: str
) -> np.ndarray:
    """episodes x rounds matrix of one metric."""
    out = np.empty((len(timelines), len(rounds)), dtype=np.float64)
    for i, tl in enumerate(timelines):
        by_round = {r.round_index: r for r in tl.rows}
        for j, rnd in enumerate(rounds):
            row = by_round[rnd]
            out[i, j] = row.sse if metric == "sse" else row.cax_by_level[int(metric[2:])]
    return out


def render_cax_figure(
    groups: dict[str, list[MetricTimeline]], out_path, levels=CAX_LEVELS
) -> Path:
    """Mean CAX vs round, one panel per level, one line per strategy."""
    fig, axes = plt.subplots(
        1, len(levels), figsize=(3.4 * len(levels), 3.2), sharey=True
    )
    if len(levels) == 1:
        axes = [axes]
    for ax, level in zip(axes, levels):
        for name, timelines in groups.items():
            rounds = _common_rounds(timelines)
            mat = _metric_matrix(timelines, rounds, f"ca{level}")
            ax.plot(rounds, mat.mean(axis=0), marker="o", markersize=3, label=name)
        ax.set_title(f"CA{level}")
        ax.set_xlabel("round")
        ax.set_ylim(0.0, 1.0)
        ax.grid(True, alpha=0.3)
    axes[0].set_ylabel("mean CAX")
    axes[-1].legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return Path(out_path)


def render_sse_figure(groups: dict[str, list[MetricTimeline]], out_path) -> Path:
    """SSE median with IQR and 5-95% bands per strategy."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]
    smallest = np.inf
    for i, (name, timelines) in enumerate(groups.items()):
        rounds = _common_rounds(timelines)
        mat = _metric_matrix(timelines, rounds, "sse")
        smallest = min(smallest, float(mat.min()))
        p05, p25, p50, p75, p95 = (
            np.percentile(mat, p, axis=0) for p in SSE_BAND_PERCENTILES
        )
        color = colors[i % len(colors)]
        ax.plot(rounds, p50, color=color, label=f"{name} (median)")
        ax.fill_between(rounds, p25, p75, color=color, alpha=0.30, linewidth=0)
        ax.fill_between(rounds, p05, p95, color=color, alpha=0.12, linewidth=0)
    ax.set_xlabel("round")
    ax.set_ylabel("SSE")
    if smallest > 0:
        ax.set_yscale("log")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return Path(out_path)


def render_run_figures(run_dir, fig_dir=None) -> list[Path]:
    """Render all figures for a run directory; returns the written paths."""
    groups = load_timeline_groups(run_dir)
    out = Path(fig_dir) if fig_dir is not None else Path(run_dir) / "figures"
    out.mkdir(parents=True, exist_ok=True)
    written = [
        render_cax_figure(groups, out / "cax_curves.png"),
        render_sse_figure(groups, out / "sse_bands.png"),
    ]
    return written
