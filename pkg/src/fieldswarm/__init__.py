"""Adaptive multi-agent soil moisture mapping.

Simulation core (grid, surrogate model, planner, strategies), an
experiment harness with statistics, and a field coordination service
with simulated operators.
"""

from .errors import (
    EpisodeError,
    FieldswarmError,
    NoPathError,
    NotFoundError,
    OutOfFieldError,
    SessionError,
    ValidationError,
)
from .grid import Cell, GridMap, GridSpec, Measurement, MeasurementLog, ObstacleMask
from .envgen import (
    FbfParams,
    LAYOUT_NAMES,
    SCurveParams,
    apply_scurve,
    generate_fbf,
    obstacle_layout,
    scurve,
)
from .kriging import KrigingMapper, ReconstructedMap, VariogramModel, burn_in_surrogate
from .planner import (
    ScoreMap,
    ScoreWeights,
    compute_score,
    route_astar,
    select_goal,
    shortest_path,
    voronoi_partition,
)
from .strategies import (
    STRATEGY_KINDS,
    StepTrace,
    StrategyConfig,
    place_agents,
    run_episode,
    spiral_cells,
)
from .metrics import (
    CAX_LEVELS,
    MetricTimeline,
    ThresholdStats,
    cax,
    evaluate_snapshot,
    nearest_rank_threshold,
    sse,
    timeline_from_trace,
)
from .stats import SampleStats, bh_adjust, pooled_stats, welch_margin_test
from .harness import (
    AggregateTable,
    ComparisonTable,
    ExperimentPlan,
    GeneratedMap,
    SavedMap,
    SweepSpec,
    compare,
    derive_seed,
    generated_map_set,
    run_plan,
    run_sweep,
)
from .geo import GeoOrigin, bearing_deg, cell_of_meters, geo_to_cell
from .session import (
    Directive,
    FieldReading,
    FieldSession,
    SessionConfig,
    SessionRecord,
    replay_session,
)

__version__ = "0.1.0"

__all__ = [
    "AggregateTable",
    "CAX_LEVELS",
    "Cell",
    "ComparisonTable",
    "Directive",
    "EpisodeError",
    "ExperimentPlan",
    "FbfParams",
    "FieldReading",
    "FieldSession",
    "FieldswarmError",
    "GeneratedMap",
    "GeoOrigin",
    "GridMap",
    "GridSpec",
    "KrigingMapper",
    "LAYOUT_NAMES",
    "Measurement",
    "MeasurementLog",
    "MetricTimeline",
    "NoPathError",
    "NotFoundError",
    "ObstacleMask",
    "OutOfFieldError",
    "ReconstructedMap",
    "SCurveParams",
    "STRATEGY_KINDS",
    "SampleStats",
    "SavedMap",
    "ScoreMap",
    "ScoreWeights",
    "SessionConfig",
    "SessionError",
    "SessionRecord",
    "StepTrace",
    "StrategyConfig",
    "SweepSpec",
    "ThresholdStats",
    "ValidationError",
    "VariogramModel",
    "apply_scurve",
    "bearing_deg",
    "bh_adjust",
    "burn_in_surrogate",
    "cax",
    "cell_of_meters",
    "compare",
    "compute_score",
    "derive_seed",
    "evaluate_snapshot",
    "generate_fbf",
    "generated_map_set",
    "geo_to_cell",
    "nearest_rank_threshold",
    "obstacle_layout",
    "place_agents",
    "pooled_stats",
    "replay_session",
    "route_astar",
    "run_episode",
    "run_plan",
    "run_sweep",
    "scurve",
    "select_goal",
    "shortest_path",
    "spiral_cells",
    "sse",
    "timeline_from_trace",
    "voronoi_partition",
    "welch_margin_test",
]
