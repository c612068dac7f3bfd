"""Live field session engine: fixes in, readings in, directives out.

A session wraps one field grid.  Operators join, report GPS fixes, and
submit sensor readings; after every accepted reading the session re-runs
kriging (or the burn-in surrogate while fewer than three distinct cells
are measured) and reassigns goals.  Every state-changing input is
appended to an event log; replaying that log through a fresh engine
reproduces the exact session state, which is also how idempotent
duplicate submissions and post-hoc analysis work.

All mutating calls are serialized per session; concurrent submissions
therefore land in a total order equal to the event-log order.
"""

from __future__ import annotations

import json
import math
import threading
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .errors import (
    NotFoundError,
    OutOfFieldError,
    ReplayError,
    SessionError,
    ValidationError,
)
from .geo import (
    GeoOrigin,
    bearing_deg,
    cell_center_meters,
    geo_to_cell,
    meters_to_geo,
    project_to_meters,
)
from .grid import AgentState, Cell, GridMap, GridSpec, Measurement, MeasurementLog, ObstacleMask
from .kriging import KrigingMapper, ReconstructedMap, burn_in_surrogate
from .metrics import CAX_LEVELS, cax, sse
from .planner import ScoreWeights, compute_score, select_goal, voronoi_partition

SESSION_STRATEGIES = ("sbs", "wandering")
PLACEMENT_MODES = ("center", "edges", "user_choice")

EVENT_SESSION_CREATED = "SessionCreated"
EVENT_AGENT_JOINED = "AgentJoined"
EVENT_FIX_REPORTED = "FixReported"
EVENT_READING_ACCEPTED = "ReadingAccepted"
EVENT_GOAL_ASSIGNED = "GoalAssigned"


@dataclass(frozen=True)
class SessionConfig:
    """Geometry, strategy and completion target for one field session."""

    origin_lat: float
    origin_lon: float
    field_extent_m: tuple[float, float] = (150.0, 150.0)
    cell_size_m: float = 10.0
    strategy: str = "sbs"
    weights: Optional[ScoreWeights] = None
    placement_mode: str = "center"
    reading_target: int = 80
    min_measurements_for_kriging: int = 3
    rng_seed: int = 0

    def __post_init__(self):
        GeoOrigin(self.origin_lat, self.origin_lon)  # bounds check
        if self.strategy not in SESSION_STRATEGIES:
            raise ValidationError(f"unknown session strategy {self.strategy!r}")
        if self.placement_mode not in PLACEMENT_MODES:
            raise ValidationError(f"unknown placement mode {self.placement_mode!r}")
        if self.reading_target < 1:
            raise ValidationError("reading_target must be >= 1")
        if self.min_measurements_for_kriging < 1:
            raise ValidationError("min_measurements_for_kriging must be >= 1")
        if self.cell_size_m <= 0:
            raise ValidationError("cell_size_m must be positive")
        ns, ew = self.field_extent_m
        for extent in (ns, ew):
            cells = extent / self.cell_size_m
            if abs(cells - round(cells)) > 1e-9 or round(cells) < 2:
                raise ValidationError(
                    f"extent {extent} m does not divide into whole cells "
                    f"of {self.cell_size_m} m (need >= 2 per side)"
                )
        object.__setattr__(self, "field_extent_m", (float(ns), float(ew)))

    @property
    def origin(self) -> GeoOrigin:
        return GeoOrigin(self.origin_lat, self.origin_lon)

    @property
    def grid_spec(self) -> GridSpec:
        ns, ew = self.field_extent_m
        return GridSpec(
            rows=int(round(ns / self.cell_size_m)),
            cols=int(round(ew / self.cell_size_m)),
            cell_size_m=self.cell_size_m,
        )

    def effective_weights(self, num_agents: int) -> ScoreWeights:
        if self.weights is not None:
            return self.weights
        return ScoreWeights.defaults_for(max(num_agents, 1))

    def to_mapping(self) -> dict:
        return {
            "origin_lat": self.origin_lat,
            "origin_lon": self.origin_lon,
            "field_extent_m": list(self.field_extent_m),
            "cell_size_m": self.cell_size_m,
            "strategy": self.strategy,
            "weights": None if self.weights is None else self.weights.to_mapping(),
            "placement_mode": self.placement_mode,
            "reading_target": self.reading_target,
            "min_measurements_for_kriging": self.min_measurements_for_kriging,
            "rng_seed": self.rng_seed,
        }

    @classmethod
    def from_mapping(cls, mapping: dict) -> "SessionConfig":
        weights = mapping.get("weights")
        return cls(
            origin_lat=float(mapping["origin_lat"]),
            origin_lon=float(mapping["origin_lon"]),
            field_extent_m=tuple(mapping.get("field_extent_m", (150.0, 150.0))),
            cell_size_m=float(mapping.get("cell_size_m", 10.0)),
            strategy=mapping.get("strategy", "sbs"),
            weights=None if weights is None else ScoreWeights.from_mapping(weights),
            placement_mode=mapping.get("placement_mode", "center"),
            reading_target=int(mapping.get("reading_target", 80)),
            min_measurements_for_kriging=int(
                mapping.get("min_measurements_for_kriging", 3)
            ),
            rng_seed=int(mapping.get("rng_seed", 0)),
        )


@dataclass(frozen=True)
class FieldReading:
    """One sensor submission; vwc is the mapped variable."""

    agent_id: str
    lat: float
    lon: float
    accuracy_m: float
    vwc: float
    token: str
    ec: Optional[float] = None
    temp_c: Optional[float] = None
    client_ts: Optional[float] = None

    def __post_init__(self):
        if not 0.0 <= self.vwc <= 1.0:
            raise ValidationError(f"vwc {self.vwc} outside [0, 1]")
        if self.accuracy_m < 0:
            raise ValidationError("accuracy_m must be >= 0")
        if not self.token:
            raise ValidationError("reading token must be non-empty")
        for name, value in (("ec", self.ec), ("temp_c", self.temp_c)):
            if value is not None and not math.isfinite(value):
                raise ValidationError(f"{name} must be finite when given")


@dataclass(frozen=True)
class Directive:
    """What one operator should do next."""

    agent_id: str
    goal: Optional[Cell]
    goal_lat: Optional[float]
    goal_lon: Optional[float]
    bearing: Optional[float]
    within_goal_cell: bool
    readings: int
    target: int

    def to_payload(self) -> dict:
        return {
            "agent_id": self.agent_id,
            "goal_cell": None if self.goal is None else [self.goal.row, self.goal.col],
            "goal_lat": self.goal_lat,
            "goal_lon": self.goal_lon,
            "bearing_deg": self.bearing,
            "within_goal_cell": self.within_goal_cell,
            "progress": {"readings": self.readings, "target": self.target},
        }


@dataclass(frozen=True)
class SessionEvent:
    seq: int
    ts: float
    type: str
    payload: dict

    def to_record(self) -> dict:
        return {"seq": self.seq, "ts": self.ts, "type": self.type, "payload": self.payload}

    @classmethod
    def from_record(cls, rec: dict) -> "SessionEvent":
        return cls(
            seq=int(rec["seq"]),
            ts=float(rec["ts"]),
            type=str(rec["type"]),
            payload=dict(rec["payload"]),
        )


@dataclass
class SessionRecord:
    """Append-only event log; the full input history of a session."""

    events: list[SessionEvent] = field(default_factory=list)

    def validate(self) -> None:
        for i, ev in enumerate(self.events, start=1):
            if ev.seq != i:
                raise ReplayError(f"event sequence gap: expected {i}, found {ev.seq}")
        if not self.events or self.events[0].type != EVENT_SESSION_CREATED:
            raise ReplayError("log must start with a session-creation event")

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for ev in self.events:
                fh.write(json.dumps(ev.to_record()) + "\n")

    @classmethod
    def load(cls, path) -> "SessionRecord":
        events = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    events.append(SessionEvent.from_record(json.loads(line)))
        return cls(events=events)


@dataclass
class _FieldAgent:
    id: str
    goal: Optional[Cell] = None
    fix_ne: Optional[tuple[float, float]] = None  # (north_m, east_m)
    fix_geo: Optional[tuple[float, float]] = None
    accuracy_m: Optional[float] = None
    readings: int = 0


class FieldSession:
    """One live (or replayed) field session."""

    def __init__(
        self,
        config: SessionConfig,
        session_id: str = "session",
        clock: Optional[Callable[[], float]] = None,
        event_sink: Optional[Callable[[SessionEvent], None]] = None,
        truth: Optional[GridMap] = None,
    ):
        self.config = config
        self.session_id = session_id
        self.spec = config.grid_spec
        self.mask = ObstacleMask.open(self.spec)
        self.origin = config.origin
        self._clock = clock if clock is not None else time.time
        self._sink = event_sink
        self._lock = threading.RLock()
        self._agents: dict[str, _FieldAgent] = {}
        self._join_order: list[str] = []
        self._log = MeasurementLog()
        self._mapper = KrigingMapper(self.spec, self.mask)
        self._recon: Optional[ReconstructedMap] = None
        self._rng = np.random.default_rng(config.rng_seed)
        self._tokens: dict[str, dict] = {}
        self._readings = 0
        self._complete = False
        self._seq = 0
        self.record = SessionRecord()
        if truth is not None and truth.spec != self.spec:
            raise ValidationError("truth map does not match the session grid")
        self._truth = truth
        self._timeline: list[dict] = []
        self._emit(EVENT_SESSION_CREATED, {"config": config.to_mapping()})

    # -- event plumbing ------------------------------------------------

    def _emit(self, type_: str, payload: dict) -> None:
        self._seq += 1
        ev = SessionEvent(seq=self._seq, ts=float(self._clock()), type=type_, payload=payload)
        self.record.events.append(ev)
        if self._sink is not None:
            self._sink(ev)

    # -- directives ----------------------------------------------------

    def _recon_now(self) -> ReconstructedMap:
        if self._recon is None:
            if self._log.distinct_cells() >= self.config.min_measurements_for_kriging:
                recon = self._mapper.reconstruct(self._log)
            else:
                recon = None
            self._recon = recon if recon is not None else burn_in_surrogate(
                self._log, self.spec, self.mask
            )
        return self._recon

    @property
    def burn_in(self) -> bool:
        return self._log.distinct_cells() < self.config.min_measurements_for_kriging

    def _directive(self, agent: _FieldAgent) -> Directive:
        goal_lat = goal_lon = bearing = None
        within = False
        if agent.goal is not None:
            goal_lat, goal_lon = meters_to_geo(
                self.origin, *cell_center_meters(self.spec, agent.goal)
            )
            if agent.fix_ne is not None:
                center = cell_center_meters(self.spec, agent.goal)
                if agent.fix_ne != center:
                    bearing = bearing_deg(agent.fix_ne, center)
                else:
                    bearing = 0.0
                within = (
                    geo_to_cell(self.origin, self.spec, *agent.fix_geo) == agent.goal
                )
        return Directive(
            agent_id=agent.id,
            goal=agent.goal,
            goal_lat=goal_lat,
            goal_lon=goal_lon,
            bearing=bearing,
            within_goal_cell=within,
            readings=self._readings,
            target=self.config.reading_target,
        )

    # -- placement -----------------------------------------------------

    def _start_goal(self, index: int) -> Optional[Cell]:
        mode = self.config.placement_mode
        if mode == "user_choice":
            return None
        if mode == "center":
            return _center_join_cell(index, self.mask)
        return _edge_join_cell(index, self.mask)

    # -- public API ----------------------------------------------------

    def join(self) -> tuple[str, Directive]:
        with self._lock:
            if self._complete:
                raise SessionError("session is complete; no new agents")
            agent_id = f"op-{len(self._agents):02d}"
            agent = _FieldAgent(id=agent_id)
            self._agents[agent_id] = agent
            self._join_order.append(agent_id)
            self._emit(EVENT_AGENT_JOINED, {"agent_id": agent_id})
            goal = self._start_goal(len(self._agents) - 1)
            if goal is not None:
                agent.goal = goal
                self._emit(
                    EVENT_GOAL_ASSIGNED,
                    {"agent_id": agent_id, "cell": [goal.row, goal.col]},
                )
            return agent_id, self._directive(agent)

    def _agent(self, agent_id: str) -> _FieldAgent:
        agent = self._agents.get(agent_id)
        if agent is None:
            raise NotFoundError(f"unknown agent {agent_id!r}")
        return agent

    def report_fix(
        self, agent_id: str, lat: float, lon: float, accuracy_m: float = 0.0
    ) -> Directive:
        with self._lock:
            agent = self._agent(agent_id)
            try:
                geo_to_cell(self.origin, self.spec, lat, lon)
            except OutOfFieldError as exc:
                exc.directive = self._directive(agent)
                raise
            agent.fix_ne = project_to_meters(self.origin, lat, lon)
            agent.fix_geo = (lat, lon)
            agent.accuracy_m = accuracy_m
            self._emit(
                EVENT_FIX_REPORTED,
                {
                    "agent_id": agent_id,
                    "lat": lat,
                    "lon": lon,
                    "accuracy_m": accuracy_m,
                },
            )
            return self._directive(agent)

    def submit_reading(self, reading: FieldReading) -> dict:
        """Returns the directive payload; duplicate tokens replay the original."""
        with self._lock:
            agent = self._agent(reading.agent_id)
            if reading.token in self._tokens:
                return dict(self._tokens[reading.token])
            if self._complete:
                raise SessionError("session is complete; reading rejected")
            cell = geo_to_cell(self.origin, self.spec, reading.lat, reading.lon)

            agent.fix_ne = project_to_meters(self.origin, reading.lat, reading.lon)
            agent.fix_geo = (reading.lat, reading.lon)
            agent.accuracy_m = reading.accuracy_m
            agent.readings += 1
            self._log.append(
                Measurement(
                    agent_id=reading.agent_id,
                    cell=cell,
                    value=reading.vwc,
                    sequence=agent.readings,
                    timestamp=float(self._clock()),
                )
            )
            self._readings += 1
            self._recon = None
            self._emit(
                EVENT_READING_ACCEPTED,
                {
                    "agent_id": reading.agent_id,
                    "lat": reading.lat,
                    "lon": reading.lon,
                    "accuracy_m": reading.accuracy_m,
                    "vwc": reading.vwc,
                    "ec": reading.ec,
                    "temp_c": reading.temp_c,
                    "client_ts": reading.client_ts,
                    "token": reading.token,
                    "cell": [cell.row, cell.col],
                },
            )
            if self._readings >= self.config.reading_target:
                self._complete = True

            self._reassign_goals(reading.agent_id)
            if self._truth is not None:
                self._timeline.append(self._evaluate_row())

            payload = self._directive(agent).to_payload()
            self._tokens[reading.token] = dict(payload)
            return payload

    # -- goal assignment -----------------------------------------------

    def _planning_states(self) -> list[AgentState]:
        states = []
        for agent_id in self._join_order:
            agent = self._agents[agent_id]
            if agent.fix_ne is not None:
                pos = geo_to_cell(self.origin, self.spec, *agent.fix_geo)
            elif agent.goal is not None:
                pos = agent.goal
            else:
                continue  # nothing known about this agent yet
            states.append(AgentState(id=agent_id, position=pos, goal=agent.goal))
        return states

    def _reassign_goals(self, submitter: str) -> None:
        if self.config.strategy == "wandering":
            agent = self._agents[submitter]
            here = (
                geo_to_cell(self.origin, self.spec, *agent.fix_geo)
                if agent.fix_geo is not None
                else None
            )
            free = self.mask.free_cells()
            while True:
                goal = free[int(self._rng.integers(len(free)))]
                if goal != here:
                    break
            self._set_goal(agent, goal)
            return
        recon = self._recon_now()
        states = self._planning_states()
        if not states:
            return
        weights = self.config.effective_weights(len(self._agents))
        owner = voronoi_partition(states, self.spec, self.mask)
        for i, state in enumerate(states):
            if not (owner == i).any():
                # another operator at the same spot wins every distance tie;
                # keep the current goal until the two separate
                continue
            smap = compute_score(
                recon, state, states, weights, self.spec, self.mask, owner
            )
            goal = select_goal(smap, state)
            self._set_goal(self._agents[state.id], goal)

    def _set_goal(self, agent: _FieldAgent, goal: Cell) -> None:
        agent.goal = goal
        self._emit(
            EVENT_GOAL_ASSIGNED, {"agent_id": agent.id, "cell": [goal.row, goal.col]}
        )

    # -- snapshots -------------------------------------------------------

    def _evaluate_row(self) -> dict:
        recon = self._recon_now()
        row = {
            "reading": self._readings,
            "sse": sse(recon.estimate, self._truth, self.mask),
        }
        for x in CAX_LEVELS:
            row[f"ca{x}"] = cax(recon.estimate, self._truth, float(x), self.mask).cax
        return row

    def final_estimate(self) -> np.ndarray:
        with self._lock:
            return self._recon_now().estimate.values.copy()

    def state(self) -> dict:
        with self._lock:
            recon = self._recon_now()
            agents = []
            for agent_id in self._join_order:
                agent = self._agents[agent_id]
                agents.append(
                    {
                        "id": agent_id,
                        "goal_cell": (
                            None if agent.goal is None else [agent.goal.row, agent.goal.col]
                        ),
                        "last_fix": (
                            None
                            if agent.fix_geo is None
                            else {
                                "lat": agent.fix_geo[0],
                                "lon": agent.fix_geo[1],
                                "accuracy_m": agent.accuracy_m,
                            }
                        ),
                        "readings": agent.readings,
                    }
                )
            state = {
                "session_id": self.session_id,
                "complete": self._complete,
                "burn_in": self.burn_in,
                "readings": self._readings,
                "target": self.config.reading_target,
                "strategy": self.config.strategy,
                "origin": {"lat": self.origin.lat, "lon": self.origin.lon},
                "grid": {
                    "rows": self.spec.rows,
                    "cols": self.spec.cols,
                    "cell_size_m": self.spec.cell_size_m,
                },
                "agents": agents,
                "estimate": recon.estimate.to_json(),
                "uncertainty": recon.uncertainty.to_json(),
            }
            if self._truth is not None:
                state["timeline"] = [dict(row) for row in self._timeline]
            return state


def _center_join_cell(index: int, mask: ObstacleMask) -> Cell:
    # ring enumeration is stable, so the i-th joiner's cell never changes
    from .strategies import _center_placement

    return _center_placement(index + 1, mask)[index]


def _edge_fraction(index: int) -> float:
    """0, 1/4, 1/2, 3/4, then odd eighths, odd sixteenths, ..."""
    if index < 4:
        return index / 4.0
    index -= 4
    level = 8
    while True:
        odds = level // 2
        if index < odds:
            return (2 * index + 1) / level
        index -= odds
        level *= 2


def _edge_join_cell(index: int, mask: ObstacleMask) -> Cell:
    from .strategies import _boundary_ring

    ring = _boundary_ring(mask.spec)
    start = int(_edge_fraction(index) * len(ring))
    for probe in range(len(ring)):
        cell = ring[(start + probe) % len(ring)]
        if mask.is_free(cell):
            return cell
    raise SessionError("no free boundary cell available")


# ---------------------------------------------------------------------------
# replay


INPUT_EVENTS = (
    EVENT_SESSION_CREATED,
    EVENT_AGENT_JOINED,
    EVENT_FIX_REPORTED,
    EVENT_READING_ACCEPTED,
)


def replay_session(
    record: SessionRecord,
    truth: Optional[GridMap] = None,
    strict: bool = True,
) -> FieldSession:
    """Rebuild a session by re-applying its logged inputs through the engine.

    With ``strict`` on, the events the replayed engine emits must match
    the recorded stream (sequence, type, payload; timestamps excluded),
    which catches both log corruption and engine drift.
    """
    record.validate()
    created = record.events[0]
    config = SessionConfig.from_mapping(created.payload["config"])
    session = FieldSession(config, session_id="replay", clock=lambda: 0.0, truth=truth)
    for ev in record.events[1:]:
        if ev.type == EVENT_AGENT_JOINED:
            agent_id, _ = session.join()
            if agent_id != ev.payload["agent_id"]:
                raise ReplayError(
                    f"replay assigned agent {agent_id}, log says {ev.payload['agent_id']}"
                )
        elif ev.type == EVENT_FIX_REPORTED:
            p = ev.payload
            session.report_fix(p["agent_id"], p["lat"], p["lon"], p["accuracy_m"])
        elif ev.type == EVENT_READING_ACCEPTED:
            p = ev.payload
            session.submit_reading(
                FieldReading(
                    agent_id=p["agent_id"],
                    lat=p["lat"],
                    lon=p["lon"],
                    accuracy_m=p["accuracy_m"],
                    vwc=p["vwc"],
                    ec=p.get("ec"),
                    temp_c=p.get("temp_c"),
                    client_ts=p.get("client_ts"),
                    token=p["token"],
                )
            )
        elif ev.type == EVENT_GOAL_ASSIGNED:
            continue  # output event; regenerated by the engine
        else:
            raise ReplayError(f"unknown event type {ev.type!r}")
    if strict:
        want = [(e.seq, e.type, e.payload) for e in record.events]
        got = [(e.seq, e.type, e.payload) for e in session.record.events]
        if want != got:
            for w, g in zip(want, got):
                if w != g:
                    raise ReplayError(f"replay diverged at seq {w[0]}: {w} != {g}")
            raise ReplayError(
                f"replay produced {len(got)} events, log holds {len(want)}"
            )
    return session
