"""Headless simulated operators driving a field session.

An operator walks in continuous meters toward its directive's goal
center, reports GPS fixes corrupted by per-axis Gaussian noise, and
submits a reading when it believes it has arrived.  Strict operators
trust the server (submit only when the server says the fix is inside the
goal cell); sloppy operators walk to a random offset within a disk
around the center and submit regardless, modeling imprecise humans.

Two drivers are provided.  The lockstep driver advances operators
round-robin on a virtual clock, which makes entire sessions bitwise
reproducible and lets the same scenario run against the in-process
engine or a real server.  The threaded driver runs each operator on its
own thread against real time to exercise concurrent ingestion.
"""

from __future__ import annotations

import json
import math
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Protocol

import httpx
import numpy as np

from .errors import SessionError
from .geo import GeoOrigin, cell_center_meters, cell_of_meters, meters_to_geo
from .grid import GridMap, GridSpec
from .session import FieldReading, FieldSession


@dataclass(frozen=True)
class OperatorModel:
    """Behavioral knobs for one simulated operator."""

    speed_mps: float = 1.4
    gps_noise_sigma_m: float = 2.5  # 2 sigma ~ 5 m worst-case GPS error
    compliance: str = "strict"
    sloppy_radius_m: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if not (self.speed_mps > 0 and math.isfinite(self.speed_mps)):
            raise ValueError("speed_mps must be positive")
        if not (self.gps_noise_sigma_m >= 0 and math.isfinite(self.gps_noise_sigma_m)):
            raise ValueError("gps_noise_sigma_m must be >= 0")
        if self.compliance not in ("strict", "sloppy"):
            raise ValueError("compliance must be strict or sloppy")
        if self.compliance == "sloppy" and self.sloppy_radius_m < 0:
            raise ValueError("sloppy_radius_m must be >= 0")


class SessionClient(Protocol):
    """Minimal transport an operator needs; one instance per operator."""

    def join(self) -> dict: ...

    def fix(self, lat: float, lon: float, accuracy_m: float) -> dict: ...

    def reading(self, payload: dict) -> dict: ...

    def state(self) -> dict: ...


class LocalSessionClient:
    """Direct in-process calls into a FieldSession (no wire format drift)."""

    def __init__(self, session: FieldSession):
        self.session = session
        self.agent_id: Optional[str] = None

    def join(self) -> dict:
        agent_id, directive = self.session.join()
        self.agent_id = agent_id
        return {"agent_id": agent_id, "directive": directive.to_payload()}

    def fix(self, lat: float, lon: float, accuracy_m: float) -> dict:
        directive = self.session.report_fix(self.agent_id, lat, lon, accuracy_m)
        return {"directive": directive.to_payload()}

    def reading(self, payload: dict) -> dict:
        reading = FieldReading(
            agent_id=self.agent_id,
            lat=payload["lat"],
            lon=payload["lon"],
            accuracy_m=payload["accuracy_m"],
            vwc=payload["vwc"],
            ec=payload.get("ec"),
            temp_c=payload.get("temp_c"),
            client_ts=payload.get("client_ts"),
            token=payload["token"],
        )
        return {"directive": self.session.submit_reading(reading)}

    def state(self) -> dict:
        return self.session.state()


class HttpSessionClient:
    """The same protocol over HTTP, with bounded idempotent retries."""

    def __init__(
        self,
        base_url: str,
        session_id: str,
        client: Optional[httpx.Client] = None,
        max_retries: int = 3,
    ):
        self.http = client if client is not None else httpx.Client(base_url=base_url)
        self.session_id = session_id
        self.agent_id: Optional[str] = None
        self.max_retries = max_retries

    def _request(self, method: str, url: str, payload: Optional[dict] = None) -> dict:
        last_exc: Optional[Exception] = None
        for attempt in range(self.max_retries):
            try:
                resp = self.http.request(method, url, json=payload)
            except httpx.TransportError as exc:
                last_exc = exc
                time.sleep(0.05 * (attempt + 1))
                continue
            if resp.status_code >= 500:
                last_exc = SessionError(f"server error {resp.status_code}")
                time.sleep(0.05 * (attempt + 1))
                continue
            if resp.status_code >= 400:
                body = resp.json()
                raise SessionError(
                    f"{url} rejected ({resp.status_code}): {body.get('error')}"
                )
            return resp.json()
        raise SessionError(f"server unreachable after {self.max_retries} tries: {last_exc}")

    def join(self) -> dict:
        out = self._request("POST", f"/api/sessions/{self.session_id}/agents")
        self.agent_id = out["agent_id"]
        return out

    def fix(self, lat: float, lon: float, accuracy_m: float) -> dict:
        return self._request(
            "POST",
            f"/api/sessions/{self.session_id}/agents/{self.agent_id}/fix",
            {"lat": lat, "lon": lon, "accuracy_m": accuracy_m},
        )

    def reading(self, payload: dict) -> dict:
        return self._request(
            "POST",
            f"/api/sessions/{self.session_id}/agents/{self.agent_id}/reading",
            payload,
        )

    def state(self) -> dict:
        return self._request("GET", f"/api/sessions/{self.session_id}/state")


def create_http_session(base_url: str, config_payload: dict) -> str:
    """POST the session config; returns the new session id."""
    resp = httpx.post(f"{base_url}/api/sessions", json=config_payload, timeout=10.0)
    resp.raise_for_status()
    return resp.json()["session_id"]


# ---------------------------------------------------------------------------
# one operator


@dataclass
class OperatorTranscript:
    agent_id: str
    entries: list[dict] = field(default_factory=list)

    def log(self, t: float, kind: str, request: dict, response: dict) -> None:
        self.entries.append(
            {"t": t, "kind": kind, "request": request, "response": response}
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for entry in self.entries:
                fh.write(json.dumps(entry) + "\n")


class SimOperator:
    """State machine for one operator; advance with tick()."""

    def __init__(
        self,
        client: SessionClient,
        model: OperatorModel,
        truth: GridMap,
        origin: GeoOrigin,
        spec: GridSpec,
    ):
        self.client = client
        self.model = model
        self.truth = truth
        self.origin = origin
        self.spec = spec
        self.rng = np.random.default_rng(model.rng_seed)
        self.transcript: Optional[OperatorTranscript] = None
        self.directive: Optional[dict] = None
        self.pos_ne: Optional[tuple[float, float]] = None
        self._walk_target: Optional[tuple[float, float]] = None
        self._target_goal: Optional[list] = None
        self._submissions = 0
        self.done = False

    # -- helpers ---------------------------------------------------------

    @property
    def agent_id(self) -> str:
        return self.client.agent_id

    def _goal_center(self) -> Optional[tuple[float, float]]:
        goal = self.directive.get("goal_cell") if self.directive else None
        if goal is None:
            return None
        from .grid import Cell

        return cell_center_meters(self.spec, Cell(goal[0], goal[1]))

    def _refresh_walk_target(self) -> None:
        goal = self.directive.get("goal_cell") if self.directive else None
        if goal is None:
            self._walk_target = None
            self._target_goal = None
            return
        if goal == self._target_goal:
            return
        center = self._goal_center()
        if self.model.compliance == "sloppy" and self.model.sloppy_radius_m > 0:
            # land somewhere in a disk around the center, not at the center
            angle = self.rng.uniform(0.0, 2.0 * math.pi)
            radius = self.model.sloppy_radius_m * math.sqrt(self.rng.uniform())
            center = (
                center[0] + radius * math.cos(angle),
                center[1] + radius * math.sin(angle),
            )
        self._walk_target = center
        self._target_goal = list(goal)

    def _noisy_fix(self) -> tuple[float, float]:
        sigma = self.model.gps_noise_sigma_m
        north = self.pos_ne[0] + (self.rng.normal(0.0, sigma) if sigma > 0 else 0.0)
        east = self.pos_ne[1] + (self.rng.normal(0.0, sigma) if sigma > 0 else 0.0)
        return north, east

    def _progress(self, directive: dict) -> tuple[int, int]:
        progress = directive["progress"]
        return int(progress["readings"]), int(progress["target"])

    # -- lifecycle ---------------------------------------------------------

    def join(self, t: float = 0.0) -> None:
        out = self.client.join()
        self.transcript = OperatorTranscript(agent_id=out["agent_id"])
        self.transcript.log(t, "join", {}, out)
        self.directive = out["directive"]
        self._refresh_walk_target()
        start = self._walk_target
        if start is None:
            start = cell_center_meters(
                self.spec, cell_of_meters(self.spec, *_field_center(self.spec))
            )
        self.pos_ne = start

    def tick(self, t: float, dt: float) -> None:
        """Move for dt seconds, report a fix, submit a reading if arrived."""
        if self.done:
            return
        self._refresh_walk_target()
        if self._walk_target is not None:
            self.pos_ne = _step_toward(
                self.pos_ne, self._walk_target, self.model.speed_mps * dt
            )

        fix_ne = self._noisy_fix()
        lat, lon = meters_to_geo(self.origin, *fix_ne)
        accuracy = max(self.model.gps_noise_sigma_m * 2.0, 1.0)
        out = self.client.fix(lat, lon, accuracy)
        self.transcript.log(
            t, "fix", {"lat": lat, "lon": lon, "accuracy_m": accuracy}, out
        )
        self.directive = out["directive"]
        readings, target = self._progress(self.directive)
        if readings >= target:
            self.done = True
            return

        if self._should_submit():
            value = self._sample_truth()
            self._submissions += 1
            token = f"{self.agent_id}-{self._submissions:04d}"
            payload = {
                "lat": lat,
                "lon": lon,
                "accuracy_m": accuracy,
                "vwc": value,
                "client_ts": t,
                "token": token,
            }
            try:
                out = self.client.reading(payload)
            except SessionError:
                # lost the race to the last reading slot
                self.done = True
                return
            self.transcript.log(t, "reading", payload, out)
            self.directive = out["directive"]
            self._refresh_walk_target()
            readings, target = self._progress(self.directive)
            if readings >= target:
                self.done = True

    def _should_submit(self) -> bool:
        if self.directive is None:
            return False
        if self.directive.get("goal_cell") is None:
            # no waypoint assigned (user_choice start): sample where we stand
            return True
        if self.model.compliance == "strict":
            return bool(self.directive.get("within_goal_cell"))
        if self._walk_target is None:
            return False
        return _distance(self.pos_ne, self._walk_target) < 0.05

    def _sample_truth(self) -> float:
        cell = cell_of_meters(self.spec, *self.pos_ne)
        return float(self.truth.values[cell.row, cell.col])


def _field_center(spec: GridSpec) -> tuple[float, float]:
    return (
        spec.rows * spec.cell_size_m / 2.0,
        spec.cols * spec.cell_size_m / 2.0,
    )


def _distance(a: tuple[float, float], b: tuple[float, float]) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def _step_toward(
    pos: tuple[float, float], target: tuple[float, float], max_step: float
) -> tuple[float, float]:
    dist = _distance(pos, target)
    if dist <= max_step or dist == 0.0:
        return target
    frac = max_step / dist
    return (pos[0] + (target[0] - pos[0]) * frac, pos[1] + (target[1] - pos[1]) * frac)


# ---------------------------------------------------------------------------
# drivers


def run_lockstep(
    clients: list[SessionClient],
    models: list[OperatorModel],
    truth: GridMap,
    max_ticks: int = 100_000,
    dt: float = 1.0,
) -> list[OperatorTranscript]:
    """Round-robin all operators on a virtual clock until the session completes.

    Deterministic: operator i always acts before operator i+1 within a
    tick, and all randomness comes from the operators' own seeded rngs.
    """
    if len(clients) != len(models):
        raise ValueError("one model per client required")
    info = clients[0].state()
    origin = GeoOrigin(info["origin"]["lat"], info["origin"]["lon"])
    spec = GridSpec(
        rows=info["grid"]["rows"],
        cols=info["grid"]["cols"],
        cell_size_m=info["grid"]["cell_size_m"],
    )
    operators = [
        SimOperator(client, model, truth, origin, spec)
        for client, model in zip(clients, models)
    ]
    for op in operators:
        op.join(t=0.0)
    for tick in range(1, max_ticks + 1):
        if all(op.done for op in operators):
            break
        for op in operators:
            op.tick(t=float(tick) * dt, dt=dt)
    else:
        raise SessionError(f"session incomplete after {max_ticks} ticks")
    return [op.transcript for op in operators]


def run_threaded(
    clients: list[SessionClient],
    models: list[OperatorModel],
    truth: GridMap,
    tick_seconds: float = 0.001,
    sim_dt: float = 1.0,
    timeout_s: float = 300.0,
) -> list[OperatorTranscript]:
    """One thread per operator against real time; exercises concurrency."""
    info = clients[0].state()
    origin = GeoOrigin(info["origin"]["lat"], info["origin"]["lon"])
    spec = GridSpec(
        rows=info["grid"]["rows"],
        cols=info["grid"]["cols"],
        cell_size_m=info["grid"]["cell_size_m"],
    )
    operators = [
        SimOperator(client, model, truth, origin, spec)
        for client, model in zip(clients, models)
    ]
    errors: list[Exception] = []

    # join everyone before any thread starts submitting: with a small reading
    # target a fast operator can otherwise finish the session while a slower
    # one is still joining, and the server refuses joins after completion
    for op in operators:
        op.join(t=0.0)

    def body(op: SimOperator) -> None:
        try:
            started = time.monotonic()
            tick = 0
            while not op.done:
                if time.monotonic() - started > timeout_s:
                    raise SessionError("operator timed out")
                tick += 1
                op.tick(t=float(tick) * sim_dt, dt=sim_dt)
                time.sleep(tick_seconds)
        except Exception as exc:  # surfaced to the caller below
            errors.append(exc)

    threads = [threading.Thread(target=body, args=(op,)) for op in operators]
    for th in threads:
        th.start()
    for th in threads:
        th.join(timeout=timeout_s + 30)
    if errors:
        raise errors[0]
    return [op.transcript for op in operators]


def save_transcripts(transcripts: list[OperatorTranscript], out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for tr in transcripts:
        path = out / f"{tr.agent_id}.jsonl"
        tr.save(path)
        paths.append(path)
    return paths
