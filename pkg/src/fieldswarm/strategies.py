"""The four mapping strategies and the synchronized episode loop.

An episode runs in rounds.  Round 0 is the initial sampling pass: every
agent measures its starting cell.  Each of the ``floor(budget / agents)``
movement rounds then replans (against a reconstruction that reflects all
measurements so far), moves every agent one step, and samples the cell it
arrived in.  Total measurements = agents + agents * movement_rounds.

Policies differ only in how they pick the next cell:

* ``sbs``       recomputes score, Voronoi regions, goal and score-biased
                route every round.
* ``ptp``       same goal selection, but the goal is frozen until reached
                and travel follows the pure-distance shortest path.
* ``spiral``    single agent walking a precomputed Archimedean spiral.
* ``wandering`` repeated shortest-path walks to uniformly random free cells.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np
from scipy.optimize import brentq

from .errors import EpisodeError, NoPathError, ValidationError
from .grid import (
    AgentState,
    Cell,
    GridMap,
    GridSpec,
    Measurement,
    MeasurementLog,
    ObstacleMask,
)
from .kriging import KrigingMapper, ReconstructedMap, burn_in_surrogate
from .planner import (
    ScoreWeights,
    compute_score,
    route_astar,
    select_goal,
    shortest_path,
    voronoi_partition,
)

STRATEGY_KINDS = ("sbs", "ptp", "spiral", "wandering")
PLACEMENT_NAMES = ("center", "edges", "random")

Placement = Union[str, tuple[Cell, ...]]


@dataclass(frozen=True)
class StrategyConfig:
    """Everything needed to run one episode reproducibly."""

    kind: str
    weights: Optional[ScoreWeights] = None
    total_step_budget: int = 800
    num_agents: int = 1
    placement: Placement = "center"
    rng_seed: int = 0
    sensor_noise_sd: float = 0.0

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ValidationError(f"unknown strategy kind {self.kind!r}")
        if self.num_agents < 1:
            raise ValidationError("num_agents must be >= 1")
        if self.total_step_budget < self.num_agents:
            raise ValidationError("budget must allow at least one step per agent")
        if self.sensor_noise_sd < 0:
            raise ValidationError("sensor_noise_sd must be >= 0")
        if isinstance(self.placement, str):
            if self.placement not in PLACEMENT_NAMES:
                raise ValidationError(f"unknown placement {self.placement!r}")
        else:
            cells = tuple(Cell(*c) for c in self.placement)
            if len(cells) != self.num_agents:
                raise ValidationError("explicit placement must list one cell per agent")
            if len(set(cells)) != len(cells):
                raise ValidationError("explicit placement cells must be distinct")
            object.__setattr__(self, "placement", cells)

    @property
    def movement_rounds(self) -> int:
        return self.total_step_budget // self.num_agents

    @property
    def effective_weights(self) -> ScoreWeights:
        if self.weights is not None:
            return self.weights
        return ScoreWeights.defaults_for(self.num_agents)


# ---------------------------------------------------------------------------
# trace records


@dataclass(frozen=True)
class AgentSnapshot:
    id: str
    pos: Cell
    goal: Optional[Cell]


@dataclass(frozen=True)
class MeasurementRecord:
    agent: str
    pos: Cell
    value: float


@dataclass(frozen=True)
class RoundRecord:
    round_index: int
    agents: tuple[AgentSnapshot, ...]
    measurements: tuple[MeasurementRecord, ...]

    def to_record(self) -> dict:
        return {
            "round": self.round_index,
            "agents": [
                {
                    "id": a.id,
                    "pos": [a.pos.row, a.pos.col],
                    "goal": None if a.goal is None else [a.goal.row, a.goal.col],
                }
                for a in self.agents
            ],
            "measurements": [
                {"agent": m.agent, "pos": [m.pos.row, m.pos.col], "value": m.value}
                for m in self.measurements
            ],
        }

    @classmethod
    def from_record(cls, rec: dict) -> "RoundRecord":
        agents = tuple(
            AgentSnapshot(
                id=a["id"],
                pos=Cell(*a["pos"]),
                goal=None if a.get("goal") is None else Cell(*a["goal"]),
            )
            for a in rec["agents"]
        )
        meas = tuple(
            MeasurementRecord(agent=m["agent"], pos=Cell(*m["pos"]), value=float(m["value"]))
            for m in rec["measurements"]
        )
        return cls(round_index=int(rec["round"]), agents=agents, measurements=meas)


@dataclass
class StepTrace:
    """Full episode timeline plus reconstruction snapshots at chosen rounds."""

    rounds: list[RoundRecord]
    snapshots: dict[int, ReconstructedMap]

    @property
    def n_measurements(self) -> int:
        return sum(len(r.measurements) for r in self.rounds)

    @property
    def movement_rounds(self) -> int:
        return len(self.rounds) - 1

    def save(self, path) -> None:
        """One JSON record per round; snapshots are not serialized."""
        with open(path, "w", encoding="utf-8") as fh:
            for rec in self.rounds:
                fh.write(json.dumps(rec.to_record()) + "\n")

    @classmethod
    def load(cls, path) -> "StepTrace":
        rounds = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    rounds.append(RoundRecord.from_record(json.loads(line)))
        return cls(rounds=rounds, snapshots={})


# ---------------------------------------------------------------------------
# placement


def place_agents(
    placement: Placement,
    num_agents: int,
    mask: ObstacleMask,
    rng: np.random.Generator,
) -> list[Cell]:
    """Distinct free starting cells for every agent."""
    if mask.n_free < num_agents:
        raise EpisodeError("fewer free cells than agents")
    if not isinstance(placement, str):
        cells = [Cell(*c) for c in placement]
        for c in cells:
            if not mask.is_free(c):
                raise EpisodeError(f"placement cell {tuple(c)} is blocked or out of bounds")
        return cells
    if placement == "center":
        return _center_placement(num_agents, mask)
    if placement == "edges":
        return _edge_placement(num_agents, mask)
    if placement == "random":
        free = mask.free_cells()
        idx = rng.choice(len(free), size=num_agents, replace=False)
        return [free[i] for i in idx]
    raise ValidationError(f"unknown placement {placement!r}")


def _center_placement(num_agents: int, mask: ObstacleMask) -> list[Cell]:
    """Center cell first, then free cells ring by ring around it."""
    spec = mask.spec
    cr, cc = (int(round(spec.center[0])), int(round(spec.center[1])))
    out: list[Cell] = []
    radius = 0
    while len(out) < num_agents:
        if radius > max(spec.rows, spec.cols):
            raise EpisodeError("not enough free cells near the center")
        for r in range(cr - radius, cr + radius + 1):
            for c in range(cc - radius, cc + radius + 1):
                if max(abs(r - cr), abs(c - cc)) != radius:
                    continue
                cell = Cell(r, c)
                if spec.contains(cell) and mask.is_free(cell):
                    out.append(cell)
                    if len(out) == num_agents:
                        return out
        radius += 1
    return out


def _boundary_ring(spec: GridSpec) -> list[Cell]:
    """Boundary cells clockwise from the top-left corner."""
    top = [Cell(0, c) for c in range(spec.cols)]
    right = [Cell(r, spec.cols - 1) for r in range(1, spec.rows)]
    bottom = [Cell(spec.rows - 1, c) for c in range(spec.cols - 2, -1, -1)]
    left = [Cell(r, 0) for r in range(spec.rows - 2, 0, -1)]
    return top + right + bottom + left


def _edge_placement(num_agents: int, mask: ObstacleMask) -> list[Cell]:
    ring = _boundary_ring(mask.spec)
    n = len(ring)
    taken: list[Cell] = []
    for i in range(num_agents):
        j = (i * n) // num_agents
        for probe in range(n):
            cell = ring[(j + probe) % n]
            if mask.is_free(cell) and cell not in taken:
                taken.append(cell)
                break
        else:
            raise EpisodeError("not enough free boundary cells for edge placement")
    return taken


# ---------------------------------------------------------------------------
# spiral geometry


def _spiral_arc_length(b: float, theta: float) -> float:
    # closed form for r = b * theta
    return 0.5 * b * (theta * math.hypot(1.0, theta) + math.asinh(theta))


def spiral_cells(spec: GridSpec, budget: int) -> list[Cell]:
    """Cells visited by a unit-arc-length spiral from the center.

    The pitch is calibrated so the radius reaches the inscribed radius
    (min(rows, cols)/2 - 1 cells) exactly at arc length ``budget``.
    Returns budget + 1 cells; index 0 is the center.
    """
    r_ins = min(spec.rows, spec.cols) / 2.0 - 1.0
    if r_ins <= 0:
        raise EpisodeError("grid too small for a spiral")
    if budget <= r_ins:
        raise EpisodeError("budget too small to reach the inscribed radius")

    def length_at_radius(theta: float) -> float:
        return _spiral_arc_length(r_ins / theta, theta) - budget

    hi = 2.0
    while length_at_radius(hi) < 0:
        hi *= 2.0
    theta_f = brentq(length_at_radius, 1e-9, hi, xtol=1e-12)
    b = r_ins / theta_f

    thetas = np.linspace(0.0, theta_f, max(4 * budget, 4096))
    lengths = 0.5 * b * (thetas * np.hypot(1.0, thetas) + np.arcsinh(thetas))
    arc = np.arange(budget + 1, dtype=np.float64)
    theta_s = np.interp(arc, lengths, thetas)
    radius = b * theta_s
    rows = spec.center[0] + radius * np.sin(theta_s)
    cols = spec.center[1] + radius * np.cos(theta_s)
    cells = [
        Cell(int(np.rint(r)), int(np.rint(c)))
        for r, c in zip(rows, cols)
    ]
    for cell in cells:
        if not spec.contains(cell):
            raise EpisodeError(f"spiral left the grid at {tuple(cell)}")
    return cells


# ---------------------------------------------------------------------------
# policies

ReconProvider = Callable[[], ReconstructedMap]


class _SbsPlanner:
    """Score, Voronoi, goal and route all recomputed every round."""

    def __init__(self, weights: ScoreWeights, spec: GridSpec, mask: ObstacleMask):
        self.weights = weights
        self.spec = spec
        self.mask = mask

    def plan(
        self,
        agents: list[AgentState],
        round_index: int,
        ensure_recon: ReconProvider,
        rng: np.random.Generator,
    ) -> list[AgentState]:
        recon = ensure_recon()
        owner = voronoi_partition(agents, self.spec, self.mask)
        out = []
        for i, agent in enumerate(agents):
            if not (owner == i).any():
                # co-located with a lower-id agent, which wins every distance
                # tie and takes the whole region; idle until they separate
                out.append(
                    replace(
                        agent,
                        steps_taken=agent.steps_taken + 1,
                        planned_route=(agent.position,),
                    )
                )
                continue
            smap = compute_score(
                recon, agent, agents, self.weights, self.spec, self.mask, owner
            )
            goal = select_goal(smap, agent)
            if goal == agent.position:
                # boxed into a single owned cell; the round is still consumed
                out.append(
                    replace(
                        agent,
                        goal=goal,
                        steps_taken=agent.steps_taken + 1,
                        planned_route=(agent.position,),
                    )
                )
                continue
            try:
                path = route_astar(agent.position, goal, smap, self.weights, self.mask)
            except NoPathError as exc:
                raise EpisodeError(f"agent {agent.id}: {exc}") from exc
            out.append(
                replace(
                    agent,
                    position=path[1],
                    goal=goal,
                    steps_taken=agent.steps_taken + 1,
                    planned_route=tuple(path[1:]),
                )
            )
        return out


class _PtpPlanner:
    """SBS goal selection, but goals freeze until reached and travel is shortest-path."""

    def __init__(self, weights: ScoreWeights, spec: GridSpec, mask: ObstacleMask):
        self.weights = weights
        self.spec = spec
        self.mask = mask

    @staticmethod
    def _needs_goal(agent: AgentState) -> bool:
        return agent.planned_route is None or len(agent.planned_route) <= 1

    def plan(
        self,
        agents: list[AgentState],
        round_index: int,
        ensure_recon: ReconProvider,
        rng: np.random.Generator,
    ) -> list[AgentState]:
        recon = None
        owner = None
        if any(self._needs_goal(a) for a in agents):
            recon = ensure_recon()
            owner = voronoi_partition(agents, self.spec, self.mask)
        out = []
        for i, agent in enumerate(agents):
            if not self._needs_goal(agent):
                route = agent.planned_route[1:]
                out.append(
                    replace(
                        agent,
                        position=route[0],
                        steps_taken=agent.steps_taken + 1,
                        planned_route=route,
                    )
                )
                continue
            if not (owner == i).any():
                # same co-location tie-break as SBS: wait a round
                out.append(
                    replace(
                        agent,
                        steps_taken=agent.steps_taken + 1,
                        planned_route=(agent.position,),
                    )
                )
                continue
            smap = compute_score(
                recon, agent, agents, self.weights, self.spec, self.mask, owner
            )
            goal = select_goal(smap, agent)
            if goal == agent.position:
                out.append(
                    replace(
                        agent,
                        goal=goal,
                        steps_taken=agent.steps_taken + 1,
                        planned_route=(agent.position,),
                    )
                )
                continue
            try:
                path = tuple(shortest_path(agent.position, goal, self.mask))
            except NoPathError as exc:
                raise EpisodeError(f"agent {agent.id}: {exc}") from exc
            out.append(
                replace(
                    agent,
                    position=path[1],
                    goal=goal,
                    steps_taken=agent.steps_taken + 1,
                    planned_route=path[1:],
                )
            )
        return out


class _SpiralPlanner:
    """Single agent follows the precomputed spiral; never consults recon."""

    def __init__(self, spec: GridSpec, mask: ObstacleMask, budget: int):
        if mask.blocked.any():
            raise EpisodeError("spiral strategy does not support obstacles")
        self.cells = spiral_cells(spec, budget)

    def plan(
        self,
        agents: list[AgentState],
        round_index: int,
        ensure_recon: ReconProvider,
        rng: np.random.Generator,
    ) -> list[AgentState]:
        agent = agents[0]
        nxt = self.cells[round_index]
        return [
            replace(
                agent,
                position=nxt,
                steps_taken=agent.steps_taken + 1,
                planned_route=None,
            )
        ]


class _WanderingPlanner:
    """Shortest-path walks to uniformly random free goals; recon is never used."""

    def __init__(self, spec: GridSpec, mask: ObstacleMask):
        self.spec = spec
        self.mask = mask
        self.free = mask.free_cells()

    def _random_goal(self, rng: np.random.Generator, position: Cell) -> Cell:
        while True:
            goal = self.free[int(rng.integers(len(self.free)))]
            if goal != position:
                return goal

    def plan(
        self,
        agents: list[AgentState],
        round_index: int,
        ensure_recon: ReconProvider,
        rng: np.random.Generator,
    ) -> list[AgentState]:
        out = []
        for agent in agents:
            route = agent.planned_route
            if route is None or len(route) <= 1:
                goal = self._random_goal(rng, agent.position)
                try:
                    route = tuple(shortest_path(agent.position, goal, self.mask))
                except NoPathError as exc:
                    raise EpisodeError(f"agent {agent.id}: {exc}") from exc
                out.append(
                    replace(
                        agent,
                        position=route[1],
                        goal=goal,
                        steps_taken=agent.steps_taken + 1,
                        planned_route=route[1:],
                    )
                )
            else:
                out.append(
                    replace(
                        agent,
                        position=route[1],
                        steps_taken=agent.steps_taken + 1,
                        planned_route=route[1:],
                    )
                )
        return out


def _make_planner(config: StrategyConfig, spec: GridSpec, mask: ObstacleMask):
    if config.kind == "sbs":
        return _SbsPlanner(config.effective_weights, spec, mask)
    if config.kind == "ptp":
        return _PtpPlanner(config.effective_weights, spec, mask)
    if config.kind == "spiral":
        if config.num_agents != 1:
            raise EpisodeError("spiral strategy supports a single agent only")
        if config.placement != "center":
            raise EpisodeError("spiral strategy requires center placement")
        return _SpiralPlanner(spec, mask, config.movement_rounds)
    if config.kind == "wandering":
        return _WanderingPlanner(spec, mask)
    raise ValidationError(f"unknown strategy kind {config.kind!r}")


# ---------------------------------------------------------------------------
# episode loop


def run_episode(
    truth: GridMap,
    mask: ObstacleMask,
    config: StrategyConfig,
    metric_rounds: Optional[Iterable[int]] = None,
) -> StepTrace:
    """Run one synchronized episode and return its trace.

    ``metric_rounds`` selects the rounds (0 = initial sampling pass) at
    which a reconstruction snapshot is stored on the trace; the default
    snapshots every round.  Restricting it avoids kriging work for
    policies that never read the reconstruction.
    """
    if truth.spec != mask.spec:
        raise ValidationError("truth map and mask must share a grid spec")
    spec = truth.spec
    rounds_total = config.movement_rounds
    if metric_rounds is None:
        snap_at = set(range(rounds_total + 1))
    else:
        snap_at = {int(r) for r in metric_rounds}
        if any(r < 0 or r > rounds_total for r in snap_at):
            raise ValidationError("metric rounds must lie within the episode")

    rng = np.random.default_rng(config.rng_seed)
    starts = place_agents(config.placement, config.num_agents, mask, rng)
    agents = [
        AgentState(id=f"a{i:02d}", position=cell) for i, cell in enumerate(starts)
    ]
    planner = _make_planner(config, spec, mask)

    log = MeasurementLog()
    mapper = KrigingMapper(spec, mask)
    recon_cache: Optional[ReconstructedMap] = None

    def ensure_recon() -> ReconstructedMap:
        nonlocal recon_cache
        if recon_cache is None:
            recon_cache = mapper.reconstruct(log) or burn_in_surrogate(log, spec, mask)
        return recon_cache

    def sample(agent: AgentState, round_index: int) -> MeasurementRecord:
        value = float(truth.values[agent.position.row, agent.position.col])
        if config.sensor_noise_sd > 0:
            value += float(rng.normal(0.0, config.sensor_noise_sd))
        log.append(
            Measurement(
                agent_id=agent.id,
                cell=agent.position,
                value=value,
                sequence=round_index,
                timestamp=float(round_index),
            )
        )
        return MeasurementRecord(agent=agent.id, pos=agent.position, value=value)

    rounds: list[RoundRecord] = []
    snapshots: dict[int, ReconstructedMap] = {}

    def record(round_index: int, measured: list[MeasurementRecord]) -> None:
        snap = tuple(AgentSnapshot(a.id, a.position, a.goal) for a in agents)
        rounds.append(RoundRecord(round_index, snap, tuple(measured)))
        if round_index in snap_at:
            snapshots[round_index] = ensure_recon()

    measured = [sample(a, 0) for a in agents]
    record(0, measured)

    for k in range(1, rounds_total + 1):
        agents = planner.plan(agents, k, ensure_recon, rng)
        recon_cache = None  # measurements below invalidate the reconstruction
        measured = [sample(a, k) for a in agents]
        record(k, measured)

    return StepTrace(rounds=rounds, snapshots=snapshots)
