"""Batch experiment driver: shared map sets, milestone tables, weight sweeps.

Every episode seed is derived by hashing (master_seed, map_id, strategy
label), so results are reproducible regardless of worker scheduling, and
every strategy in a plan consumes the identical map sequence.
"""

from __future__ import annotations

import csv
import hashlib
import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .envgen import FbfParams, SCurveParams, apply_scurve, generate_fbf, obstacle_layout
from .errors import EpisodeError, ValidationError
from .grid import GridMap, GridSpec, ObstacleMask
from .metrics import CAX_LEVELS, MetricTimeline, TimelineRow, timeline_from_trace
from .planner import ScoreWeights
from .stats import SampleStats, bh_adjust, welch_margin_test
from .strategies import StrategyConfig, run_episode

log = logging.getLogger(__name__)

METRIC_ORDER = ("sse",) + tuple(f"ca{x}" for x in CAX_LEVELS)

AGGREGATE_HEADER = ("strategy", "agents", "milestone", "metric", "mean", "sd", "n")

SWEEPABLE_WEIGHTS = (
    "weight_expected_value",
    "weight_uncertainty",
    "weight_prefer_center",
    "weight_prefer_closeness",
    "weight_prefer_current_goal",
)


def derive_seed(master_seed: int, *parts) -> int:
    """Stable 64-bit seed from a master seed and any identifying parts."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(master_seed)).encode())
    for part in parts:
        h.update(b"\x00" + str(part).encode())
    return int.from_bytes(h.digest(), "little")


# ---------------------------------------------------------------------------
# map sources


@dataclass(frozen=True)
class GeneratedMap:
    """Recipe for one synthetic truth map (regenerated on demand)."""

    map_id: str
    rows: int
    cols: int
    seed: int
    cell_size_m: float = 1.0
    hurst: float = 0.7
    scurve_threshold: Optional[float] = None
    scurve_power: Optional[float] = None
    layout: str = "none"

    def realize(self) -> tuple[GridMap, ObstacleMask]:
        spec = GridSpec(rows=self.rows, cols=self.cols, cell_size_m=self.cell_size_m)
        truth = generate_fbf(FbfParams(spec=spec, seed=self.seed, hurst=self.hurst))
        if self.scurve_threshold is not None:
            params = SCurveParams(
                threshold_value=self.scurve_threshold,
                curve_power=self.scurve_power if self.scurve_power is not None else 1.0,
            )
            truth = apply_scurve(truth, params)
        return truth, obstacle_layout(self.layout, spec)


@dataclass(frozen=True)
class SavedMap:
    """Truth map stored on disk (see GridMap.save), paired with a layout."""

    map_id: str
    path: str
    layout: str = "none"

    def realize(self) -> tuple[GridMap, ObstacleMask]:
        truth = GridMap.load(self.path)
        return truth, obstacle_layout(self.layout, truth.spec)


MapRef = Union[GeneratedMap, SavedMap]


def generated_map_set(
    n_maps: int,
    rows: int,
    cols: int,
    master_seed: int,
    cell_size_m: float = 1.0,
    hurst: float = 0.7,
    layout: str = "none",
) -> tuple[GeneratedMap, ...]:
    """A reproducible family of map recipes, ids map-000, map-001, ..."""
    return tuple(
        GeneratedMap(
            map_id=f"map-{i:03d}",
            rows=rows,
            cols=cols,
            seed=derive_seed(master_seed, "map", i),
            cell_size_m=cell_size_m,
            hurst=hurst,
            layout=layout,
        )
        for i in range(n_maps)
    )


# ---------------------------------------------------------------------------
# plans


@dataclass(frozen=True)
class ExperimentPlan:
    """A cross of maps x strategies evaluated at budget-fraction milestones."""

    maps: tuple[MapRef, ...]
    strategies: tuple[StrategyConfig, ...]
    labels: tuple[str, ...] = ()
    milestones: tuple[float, ...] = (0.25, 0.50, 1.00)
    parallelism: int = 1
    master_seed: int = 0

    def __post_init__(self):
        if not self.maps:
            raise ValidationError("plan needs at least one map")
        if not self.strategies:
            raise ValidationError("plan needs at least one strategy")
        budgets = {s.total_step_budget for s in self.strategies}
        if len(budgets) != 1:
            raise ValidationError(
                f"strategies must share one step budget, got {sorted(budgets)}"
            )
        if not self.labels:
            object.__setattr__(
                self, "labels", tuple(s.kind for s in self.strategies)
            )
        if len(self.labels) != len(self.strategies):
            raise ValidationError("labels must pair one-to-one with strategies")
        keys = [
            (label, s.num_agents) for label, s in zip(self.labels, self.strategies)
        ]
        if len(set(keys)) != len(keys):
            raise ValidationError(
                "duplicate (label, num_agents) pairs; pass distinct labels"
            )
        ids = [m.map_id for m in self.maps]
        if len(set(ids)) != len(ids):
            raise ValidationError("map ids must be unique")
        for f in self.milestones:
            if not 0 < f <= 1:
                raise ValidationError("milestones must lie in (0, 1]")
        if self.parallelism < 1:
            raise ValidationError("parallelism must be >= 1")

    @property
    def replicates(self) -> int:
        return len(self.maps)


def milestone_rounds(fractions: Sequence[float], movement_rounds: int) -> list[int]:
    return [int(math.floor(f * movement_rounds)) for f in fractions]


@dataclass(frozen=True)
class EpisodeMetrics:
    label: str
    agents: int
    map_id: str
    rows: tuple[TimelineRow, ...]


@dataclass(frozen=True)
class AggregateRow:
    strategy: str
    agents: int
    milestone: float
    metric: str
    mean: float
    sd: float
    n: int


@dataclass
class AggregateTable:
    rows: list[AggregateRow]

    def lookup(
        self, strategy: str, agents: int, milestone: float, metric: str
    ) -> AggregateRow:
        for row in self.rows:
            if (
                row.strategy == strategy
                and row.agents == agents
                and row.milestone == milestone
                and row.metric == metric
            ):
                return row
        raise KeyError((strategy, agents, milestone, metric))

    def save_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(AGGREGATE_HEADER)
            for r in self.rows:
                writer.writerow(
                    [
                        r.strategy,
                        r.agents,
                        repr(r.milestone),
                        r.metric,
                        repr(r.mean),
                        repr(r.sd),
                        r.n,
                    ]
                )

    @classmethod
    def load_csv(cls, path) -> "AggregateTable":
        rows = []
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if tuple(header) != AGGREGATE_HEADER:
                raise ValidationError(f"unexpected aggregate header {header}")
            for rec in reader:
                rows.append(
                    AggregateRow(
                        strategy=rec[0],
                        agents=int(rec[1]),
                        milestone=float(rec[2]),
                        metric=rec[3],
                        mean=float(rec[4]),
                        sd=float(rec[5]),
                        n=int(rec[6]),
                    )
                )
        return cls(rows=rows)


@dataclass
class PlanResult:
    plan: ExperimentPlan
    episodes: list[EpisodeMetrics]
    aggregate: AggregateTable
    failures: list[tuple[str, str, str]]  # (label, map_id, diagnostic)
    map_ids: tuple[str, ...]


@dataclass(frozen=True)
class _EpisodeJob:
    map_ref: MapRef
    config: StrategyConfig
    label: str
    metric_rounds: tuple[int, ...]
    timeline_path: Optional[str]


def _run_episode_job(job: _EpisodeJob):
    """Worker body; returns (label, map_id, rows | None, diagnostic | None)."""
    try:
        truth, mask = job.map_ref.realize()
        trace = run_episode(truth, mask, job.config, metric_rounds=job.metric_rounds)
        timeline = timeline_from_trace(trace, truth, mask)
        if job.timeline_path is not None:
            timeline.save_csv(job.timeline_path)
        return job.label, job.map_ref.map_id, tuple(timeline.rows), None
    except EpisodeError as exc:
        return job.label, job.map_ref.map_id, None, str(exc)


def run_plan(plan: ExperimentPlan, out_dir=None) -> PlanResult:
    """Run every (map, strategy) episode and aggregate milestone statistics."""
    out_path = Path(out_dir) if out_dir is not None else None
    jobs: list[_EpisodeJob] = []
    consumed: dict[str, list[str]] = {}
    for label, config in zip(plan.labels, plan.strategies):
        rounds = tuple(
            sorted(set(milestone_rounds(plan.milestones, config.movement_rounds)))
        )
        tl_dir = None
        if out_path is not None:
            tl_dir = out_path / "timelines" / f"{label}-{config.num_agents}"
            tl_dir.mkdir(parents=True, exist_ok=True)
        for map_ref in plan.maps:
            seed = derive_seed(plan.master_seed, map_ref.map_id, label)
            jobs.append(
                _EpisodeJob(
                    map_ref=map_ref,
                    config=replace(config, rng_seed=seed),
                    label=label,
                    metric_rounds=rounds,
                    timeline_path=(
                        str(tl_dir / f"{map_ref.map_id}.csv") if tl_dir else None
                    ),
                )
            )
            consumed.setdefault(label, []).append(map_ref.map_id)

    sequences = set(tuple(v) for v in consumed.values())
    if len(sequences) != 1:
        raise ValidationError("strategies consumed different map sequences")

    if plan.parallelism > 1:
        with ProcessPoolExecutor(max_workers=plan.parallelism) as pool:
            raw = list(pool.map(_run_episode_job, jobs, chunksize=1))
    else:
        raw = [_run_episode_job(job) for job in jobs]

    episodes: list[EpisodeMetrics] = []
    failures: list[tuple[str, str, str]] = []
    agents_by_label = {
        label: cfg.num_agents for label, cfg in zip(plan.labels, plan.strategies)
    }
    for label, map_id, rows, diagnostic in raw:
        if diagnostic is not None:
            log.warning("episode failed (%s, %s): %s", label, map_id, diagnostic)
            failures.append((label, map_id, diagnostic))
            continue
        episodes.append(
            EpisodeMetrics(
                label=label, agents=agents_by_label[label], map_id=map_id, rows=rows
            )
        )

    aggregate = _aggregate(plan, episodes)
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
        aggregate.save_csv(out_path / "aggregate.csv")
    return PlanResult(
        plan=plan,
        episodes=episodes,
        aggregate=aggregate,
        failures=failures,
        map_ids=tuple(m.map_id for m in plan.maps),
    )


def _metric_value(row: TimelineRow, metric: str) -> float:
    if metric == "sse":
        return row.sse
    return row.cax_by_level[int(metric[2:])]


def aggregate_metrics(
    episodes: list[EpisodeMetrics],
    milestones: Sequence[float],
    movement_rounds_of: dict[tuple[str, int], int],
) -> AggregateTable:
    """Mean/sd of every metric at each milestone, per (strategy, agents)."""
    rows: list[AggregateRow] = []
    for (label, agents), rounds_total in movement_rounds_of.items():
        eps = [e for e in episodes if e.label == label and e.agents == agents]
        for fraction in milestones:
            target = int(math.floor(fraction * rounds_total))
            for metric in METRIC_ORDER:
                values = []
                for e in eps:
                    row = next(r for r in e.rows if r.round_index == target)
                    values.append(_metric_value(row, metric))
                if not values:
                    continue
                arr = np.array(values, dtype=np.float64)
                sd = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
                rows.append(
                    AggregateRow(
                        strategy=label,
                        agents=agents,
                        milestone=fraction,
                        metric=metric,
                        mean=float(arr.mean()),
                        sd=sd,
                        n=int(arr.size),
                    )
                )
    return AggregateTable(rows=rows)


def _aggregate(plan: ExperimentPlan, episodes: list[EpisodeMetrics]) -> AggregateTable:
    movement_rounds_of = {
        (label, cfg.num_agents): cfg.movement_rounds
        for label, cfg in zip(plan.labels, plan.strategies)
    }
    return aggregate_metrics(episodes, plan.milestones, movement_rounds_of)


# ---------------------------------------------------------------------------
# significance comparison


@dataclass(frozen=True)
class ComparisonCell:
    agents_a: int
    agents_b: int
    milestone: float
    metric: str
    mean_a: float
    mean_b: float
    p_value: float
    reject: bool


COMPARISON_HEADER = (
    "agents_a",
    "agents_b",
    "milestone",
    "metric",
    "mean_a",
    "mean_b",
    "p_value",
    "reject",
)


@dataclass
class ComparisonTable:
    margin: float
    alpha: float
    cells: list[ComparisonCell]

    def save_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(COMPARISON_HEADER)
            for c in self.cells:
                writer.writerow(
                    [
                        c.agents_a,
                        c.agents_b,
                        repr(c.milestone),
                        c.metric,
                        repr(c.mean_a),
                        repr(c.mean_b),
                        repr(c.p_value),
                        int(c.reject),
                    ]
                )


def metric_direction(metric: str) -> str:
    """How "better" reads for a metric: lower for errors, higher for scores."""
    return "lower" if metric == "sse" else "higher"


def compare(
    table_a: AggregateTable,
    table_b: AggregateTable,
    margin: float,
    alpha: float,
    pair_agents: Optional[Sequence[tuple[int, int]]] = None,
) -> ComparisonTable:
    """Margin-shifted Welch test per (milestone, metric, agent pair), BH-adjusted.

    By default rows pair on equal agent counts; ``pair_agents`` supplies
    explicit (agents_a, agents_b) pairs for N-vs-N/2 style questions.
    """
    key_a = {(r.agents, r.milestone, r.metric): r for r in table_a.rows}
    key_b = {(r.agents, r.milestone, r.metric): r for r in table_b.rows}
    if pair_agents is None:
        agents_a = sorted({r.agents for r in table_a.rows})
        agents_b = sorted({r.agents for r in table_b.rows})
        if agents_a != agents_b:
            raise ValidationError(
                f"agent counts differ ({agents_a} vs {agents_b}); pass pair_agents"
            )
        pairs = [(a, a) for a in agents_a]
    else:
        pairs = [(int(a), int(b)) for a, b in pair_agents]

    milestones = sorted({r.milestone for r in table_a.rows})
    if milestones != sorted({r.milestone for r in table_b.rows}):
        raise ValidationError("milestone grids differ between tables")

    cells: list[ComparisonCell] = []
    p_values: list[float] = []
    for agents_pair in pairs:
        for milestone in milestones:
            for metric in METRIC_ORDER:
                ka = (agents_pair[0], milestone, metric)
                kb = (agents_pair[1], milestone, metric)
                if ka not in key_a or kb not in key_b:
                    raise ValidationError(f"missing aggregate cell {ka} / {kb}")
                row_a = key_a[ka]
                row_b = key_b[kb]
                p = welch_margin_test(
                    SampleStats(n=row_a.n, mean=row_a.mean, sd=row_a.sd),
                    SampleStats(n=row_b.n, mean=row_b.mean, sd=row_b.sd),
                    margin,
                    metric_direction(metric),
                )
                p_values.append(p)
                cells.append(
                    ComparisonCell(
                        agents_a=agents_pair[0],
                        agents_b=agents_pair[1],
                        milestone=milestone,
                        metric=metric,
                        mean_a=row_a.mean,
                        mean_b=row_b.mean,
                        p_value=p,
                        reject=False,
                    )
                )
    flags = bh_adjust(p_values, alpha)
    cells = [replace(c, reject=flag) for c, flag in zip(cells, flags)]
    return ComparisonTable(margin=margin, alpha=alpha, cells=cells)


# ---------------------------------------------------------------------------
# weight sweep


@dataclass(frozen=True)
class SweepSpec:
    """Full-factorial score-weight sweep over randomized environments."""

    grid_values: tuple[float, ...] = (0.0, 0.1, 1.0, 10.0, 100.0)
    varied: tuple[str, ...] = SWEEPABLE_WEIGHTS
    replicates: int = 100
    rows: int = 100
    cols: int = 100
    cell_size_m: float = 1.0
    budget: int = 800
    hurst: float = 0.7
    threshold_range: tuple[float, float] = (0.2, 0.8)
    power_range: tuple[float, float] = (0.5, 8.0)
    master_seed: int = 0
    parallelism: int = 1

    def __post_init__(self):
        if any(v < 0 for v in self.grid_values):
            raise ValidationError("grid values must be non-negative")
        unknown = set(self.varied) - set(SWEEPABLE_WEIGHTS)
        if unknown:
            raise ValidationError(f"cannot sweep {sorted(unknown)}")
        if self.replicates < 1:
            raise ValidationError("replicates must be >= 1")

    def environments(self) -> tuple[GeneratedMap, ...]:
        """The shared random environments every combination is scored on."""
        envs = []
        for i in range(self.replicates):
            rng = np.random.default_rng(derive_seed(self.master_seed, "sweep-env", i))
            t = float(rng.uniform(*self.threshold_range))
            lo, hi = (math.log(self.power_range[0]), math.log(self.power_range[1]))
            k = float(math.exp(rng.uniform(lo, hi)))
            envs.append(
                GeneratedMap(
                    map_id=f"env-{i:03d}",
                    rows=self.rows,
                    cols=self.cols,
                    seed=int(rng.integers(0, 2**63 - 1)),
                    cell_size_m=self.cell_size_m,
                    hurst=self.hurst,
                    scurve_threshold=t,
                    scurve_power=k,
                )
            )
        return tuple(envs)

    def combinations(self) -> list[dict]:
        """All weight mappings in the factorial grid, fixed lexicographic order."""
        out = []
        for values in itertools.product(self.grid_values, repeat=len(self.varied)):
            out.append(dict(zip(self.varied, values)))
        return out


SWEEP_OBJECTIVE = "rank by mean final SSE ascending; mean final CA90 breaks ties"

SWEEP_HEADER = SWEEPABLE_WEIGHTS + ("mean_final_sse", "mean_final_ca90", "rank")


@dataclass(frozen=True)
class SweepRow:
    weights: ScoreWeights
    mean_final_sse: float
    mean_final_ca90: float
    rank: int


@dataclass
class SweepResult:
    spec: SweepSpec
    rows: list[SweepRow]  # sorted by rank
    skipped: list[dict]  # degenerate combinations

    @property
    def best(self) -> ScoreWeights:
        return self.rows[0].weights

    def save_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(SWEEP_HEADER)
            for row in self.rows:
                mapping = row.weights.to_mapping()
                writer.writerow(
                    [repr(float(mapping[k])) for k in SWEEPABLE_WEIGHTS]
                    + [repr(row.mean_final_sse), repr(row.mean_final_ca90), row.rank]
                )


@dataclass(frozen=True)
class _SweepJob:
    combo_index: int
    weights: ScoreWeights
    env: GeneratedMap
    budget: int
    seed: int


def _run_sweep_job(job: _SweepJob):
    truth, mask = job.env.realize()
    config = StrategyConfig(
        kind="sbs",
        weights=job.weights,
        total_step_budget=job.budget,
        num_agents=1,
        placement="center",
        rng_seed=job.seed,
    )
    final_round = config.movement_rounds
    trace = run_episode(truth, mask, config, metric_rounds=(final_round,))
    timeline = timeline_from_trace(trace, truth, mask)
    row = timeline.rows[-1]
    return job.combo_index, row.sse, row.cax_by_level[90]


def run_sweep(spec: SweepSpec) -> SweepResult:
    """Evaluate every weight combination on the shared environment set."""
    envs = spec.environments()
    combos = spec.combinations()

    valid: list[tuple[int, ScoreWeights]] = []
    skipped: list[dict] = []
    for i, combo in enumerate(combos):
        try:
            weights = ScoreWeights.from_mapping(dict(combo), num_agents=1)
        except ValidationError as exc:
            log.warning("skipping combination %s: %s", combo, exc)
            skipped.append(dict(combo))
            continue
        valid.append((i, weights))

    jobs = [
        _SweepJob(
            combo_index=i,
            weights=weights,
            env=env,
            budget=spec.budget,
            seed=derive_seed(spec.master_seed, "sweep-run", env.map_id),
        )
        for (i, weights) in valid
        for env in envs
    ]
    if spec.parallelism > 1:
        with ProcessPoolExecutor(max_workers=spec.parallelism) as pool:
            raw = list(pool.map(_run_sweep_job, jobs, chunksize=1))
    else:
        raw = [_run_sweep_job(job) for job in jobs]

    sse_by_combo: dict[int, list[float]] = {}
    ca90_by_combo: dict[int, list[float]] = {}
    for combo_index, final_sse, final_ca90 in raw:
        sse_by_combo.setdefault(combo_index, []).append(final_sse)
        ca90_by_combo.setdefault(combo_index, []).append(final_ca90)

    scored = []
    for i, weights in valid:
        scored.append(
            (
                float(np.mean(sse_by_combo[i])),
                -float(np.mean(ca90_by_combo[i])),
                i,
                weights,
            )
        )
    scored.sort()
    rows = [
        SweepRow(
            weights=weights,
            mean_final_sse=mean_sse,
            mean_final_ca90=-neg_ca90,
            rank=rank,
        )
        for rank, (mean_sse, neg_ca90, _i, weights) in enumerate(scored, start=1)
    ]
    return SweepResult(spec=spec, rows=rows, skipped=skipped)
