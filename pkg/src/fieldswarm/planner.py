"""Score-biased planning: per-agent score maps, Voronoi split, goals, routes.

The score of a free cell is a weighted sum of five normalized ingredients:
kriged estimate, kriging uncertainty, nearness to the domain center,
nearness to the agent, and nearness to the agent's current goal (dropped
when the agent has none).  Goals are the score argmax inside the agent's
Voronoi region; routes bias travel through high-score cells by charging
``w_step_cost * step_length + 1/(score_norm + 0.1)`` per entered cell.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .errors import NoPathError, ValidationError
from .grid import SQRT2, AgentState, Cell, GridMap, GridSpec, ObstacleMask, neighbors8
from .kriging import ReconstructedMap

#: score floor in the travel-cost reciprocal, bounding per-cell cost at 10
SCORE_EPS = 0.1

WEIGHT_KEYS = (
    "weight_expected_value",
    "weight_uncertainty",
    "weight_prefer_center",
    "weight_prefer_closeness",
    "weight_prefer_current_goal",
    "weight_step_cost",
)


@dataclass(frozen=True)
class ScoreWeights:
    """The five score weights plus the travel step cost."""

    expected_value: float = 1.0
    uncertainty: float = 10.0
    prefer_center: float = 0.1
    prefer_closeness: float = 0.1
    prefer_current_goal: float = 10.0
    step_cost: float = 0.01

    def __post_init__(self):
        score_terms = (
            self.expected_value,
            self.uncertainty,
            self.prefer_center,
            self.prefer_closeness,
            self.prefer_current_goal,
        )
        if any(w < 0 for w in score_terms):
            raise ValidationError("score weights must be non-negative")
        if not all(map(math.isfinite, score_terms)):
            raise ValidationError("score weights must be finite")
        if max(score_terms) <= 0:
            raise ValidationError("at least one score weight must be positive")
        if not (self.step_cost > 0 and math.isfinite(self.step_cost)):
            raise ValidationError("step_cost must be positive")

    @classmethod
    def defaults_for(cls, num_agents: int) -> "ScoreWeights":
        """Best-performing weights; goal persistence drops to 1 for larger teams."""
        return cls(prefer_current_goal=10.0 if num_agents <= 2 else 1.0)

    @classmethod
    def from_mapping(cls, mapping: dict, num_agents: int = 1) -> "ScoreWeights":
        base = cls.defaults_for(num_agents)
        unknown = set(mapping) - set(WEIGHT_KEYS)
        if unknown:
            raise ValidationError(f"unknown weight keys: {sorted(unknown)}")
        fields = {
            "expected_value": "weight_expected_value",
            "uncertainty": "weight_uncertainty",
            "prefer_center": "weight_prefer_center",
            "prefer_closeness": "weight_prefer_closeness",
            "prefer_current_goal": "weight_prefer_current_goal",
            "step_cost": "weight_step_cost",
        }
        kwargs = {
            attr: float(mapping[key]) for attr, key in fields.items() if key in mapping
        }
        return replace(base, **kwargs)

    @classmethod
    def from_file(cls, path, num_agents: int = 1) -> "ScoreWeights":
        """Parse a flat key=value file (``#`` starts a comment)."""
        mapping = {}
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValidationError(f"{path}:{lineno}: expected key=value")
                key, val = (part.strip() for part in line.split("=", 1))
                mapping[key] = val
        return cls.from_mapping(mapping, num_agents)

    def to_mapping(self) -> dict:
        return {
            "weight_expected_value": self.expected_value,
            "weight_uncertainty": self.uncertainty,
            "weight_prefer_center": self.prefer_center,
            "weight_prefer_closeness": self.prefer_closeness,
            "weight_prefer_current_goal": self.prefer_current_goal,
            "weight_step_cost": self.step_cost,
        }


def normalize01(gmap: GridMap, mask: ObstacleMask) -> GridMap:
    """Min-max normalize over free cells; a flat map becomes all zeros."""
    return gmap.with_values(_normalize01(gmap.values, mask.free))


def _normalize01(values: np.ndarray, free: np.ndarray) -> np.ndarray:
    out = np.zeros_like(values, dtype=np.float64)
    vals = values[free]
    if vals.size == 0:
        return out
    lo = np.nanmin(vals)
    hi = np.nanmax(vals)
    if not np.isfinite(lo) or not np.isfinite(hi) or hi - lo <= 0:
        return out
    out[free] = (values[free] - lo) / (hi - lo)
    return out


def _distance_field(spec: GridSpec, point: tuple[float, float]) -> np.ndarray:
    rr = np.arange(spec.rows, dtype=np.float64)[:, None]
    cc = np.arange(spec.cols, dtype=np.float64)[None, :]
    return np.hypot(rr - point[0], cc - point[1])


def voronoi_partition(
    agents: Sequence[AgentState], spec: GridSpec, mask: ObstacleMask
) -> np.ndarray:
    """Owner index (into ``agents``) per cell; blocked cells get -1.

    Each free cell goes to the closest agent position (Euclidean, cell
    units); ties go to the agent with the lower id.
    """
    if not agents:
        raise ValidationError("voronoi partition needs at least one agent")
    order = sorted(range(len(agents)), key=lambda i: agents[i].id)
    dists = np.stack(
        [_distance_field(spec, (agents[i].position.row, agents[i].position.col)) for i in order]
    )
    # argmin returns the first minimum, i.e. the lowest id thanks to the sort
    owner_sorted = np.argmin(dists, axis=0)
    owner = np.array(order, dtype=np.int64)[owner_sorted]
    owner[mask.blocked] = -1
    return owner


@dataclass(frozen=True)
class ScoreMap:
    """One agent's score field plus the shared Voronoi ownership."""

    score: GridMap
    owner: np.ndarray
    agent_index: int

    @property
    def values(self) -> np.ndarray:
        return self.score.values


def compute_score(
    recon: ReconstructedMap,
    agent: AgentState,
    all_agents: Sequence[AgentState],
    weights: ScoreWeights,
    spec: GridSpec,
    mask: ObstacleMask,
    owner: Optional[np.ndarray] = None,
) -> ScoreMap:
    """Five-term score for ``agent``.  Blocked cells score 0.

    ``owner`` may carry a precomputed partition for this round; it is
    derived from agent positions otherwise.
    """
    free = mask.free
    est_n = _normalize01(recon.estimate.values, free)
    unc_n = _normalize01(recon.uncertainty.values, free)
    d_center = _normalize01(_distance_field(spec, spec.center), free)
    d_agent = _normalize01(
        _distance_field(spec, (agent.position.row, agent.position.col)), free
    )

    score = (
        weights.expected_value * est_n
        + weights.uncertainty * unc_n
        + weights.prefer_center * (1.0 - d_center)
        + weights.prefer_closeness * (1.0 - d_agent)
    )
    if agent.goal is not None:
        d_goal = _normalize01(_distance_field(spec, (agent.goal.row, agent.goal.col)), free)
        score = score + weights.prefer_current_goal * (1.0 - d_goal)
    score[~free] = 0.0

    if owner is None:
        owner = voronoi_partition(all_agents, spec, mask)
    idx = next(i for i, a in enumerate(all_agents) if a.id == agent.id)
    return ScoreMap(GridMap(spec, score, kind="score"), owner, idx)


def select_goal(score_map: ScoreMap, agent: AgentState) -> Cell:
    """Argmax of the agent's score over its own Voronoi cells.

    Ties break toward the lowest flat cell index; the agent's current cell
    is excluded unless it is the only cell the agent owns.
    """
    owned = score_map.owner == score_map.agent_index
    if not owned.any():
        raise ValidationError(f"agent {agent.id} owns no cells")
    candidates = owned.copy()
    if owned.sum() > 1:
        candidates[agent.position.row, agent.position.col] = False
    masked = np.where(candidates, score_map.values, -np.inf)
    flat = int(np.argmax(masked))  # first max in row-major order = lowest index
    return Cell(flat // masked.shape[1], flat % masked.shape[1])


def _entry_cost_field(score_values: np.ndarray, free: np.ndarray) -> np.ndarray:
    """Per-cell entry cost 1/(normalized score + eps); the step term is added per move."""
    return 1.0 / (_normalize01(score_values, free) + SCORE_EPS)


def route_astar(
    start: Cell,
    goal: Cell,
    score_map: ScoreMap,
    weights: ScoreWeights,
    mask: ObstacleMask,
) -> list[Cell]:
    """Minimal-cost route from start to goal under the score-biased cost.

    cost(step into c, length l) = step_cost * l + 1/(score_norm(c) + 0.1).
    The heuristic charges Chebyshev distance at the cheapest possible
    per-step cost, which keeps it admissible and consistent.
    """
    entry = _entry_cost_field(score_map.values, mask.free)
    # cheapest conceivable step: orthogonal move into a max-score cell
    rate = weights.step_cost + 1.0 / (1.0 + SCORE_EPS)

    def heuristic(cell: Cell) -> float:
        return rate * max(abs(cell.row - goal.row), abs(cell.col - goal.col))

    return _astar(start, goal, mask, entry, weights.step_cost, heuristic)


def shortest_path(start: Cell, goal: Cell, mask: ObstacleMask) -> list[Cell]:
    """Pure-distance route (unit orthogonal / sqrt(2) diagonal steps)."""
    zeros = np.zeros((mask.spec.rows, mask.spec.cols))

    def heuristic(cell: Cell) -> float:
        dr = abs(cell.row - goal.row)
        dc = abs(cell.col - goal.col)
        return max(dr, dc) + (SQRT2 - 1.0) * min(dr, dc)

    return _astar(start, goal, mask, zeros, 1.0, heuristic)


def _astar(
    start: Cell,
    goal: Cell,
    mask: ObstacleMask,
    entry_cost: np.ndarray,
    step_weight: float,
    heuristic,
) -> list[Cell]:
    if start == goal:
        raise ValidationError("route requires start != goal")
    for cell, name in ((start, "start"), (goal, "goal")):
        if not mask.is_free(cell):
            raise NoPathError(f"{name} {tuple(cell)} is blocked or out of bounds")
    spec = mask.spec

    g = {start: 0.0}
    parent: dict[Cell, Cell] = {}
    closed: set[Cell] = set()
    tie = 0
    heap: list[tuple[float, int, Cell]] = [(heuristic(start), tie, start)]
    while heap:
        _, _, cur = heapq.heappop(heap)
        if cur in closed:
            continue
        if cur == goal:
            path = [cur]
            while cur in parent:
                cur = parent[cur]
                path.append(cur)
            path.reverse()
            return path
        closed.add(cur)
        g_cur = g[cur]
        for nb, length in neighbors8(spec, mask, cur):
            if nb in closed:
                continue
            cand = g_cur + step_weight * length + entry_cost[nb.row, nb.col]
            if cand < g.get(nb, math.inf):
                g[nb] = cand
                parent[nb] = cur
                tie += 1
                heapq.heappush(heap, (cand + heuristic(nb), tie, nb))
    raise NoPathError(f"no route from {tuple(start)} to {tuple(goal)}")


def path_cost(
    path: Sequence[Cell], entry_cost: np.ndarray, step_weight: float
) -> float:
    """Accumulated cost of a path under the same arithmetic the router uses."""
    total = 0.0
    for prev, cur in zip(path, path[1:]):
        length = SQRT2 if (prev.row != cur.row and prev.col != cur.col) else 1.0
        # left-associated on purpose: float-identical to the router's g updates
        total = total + step_weight * length + entry_cost[cur.row, cur.col]
    return total
