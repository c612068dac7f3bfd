// Browser entry point. Wires geolocation, the compass, and the DOM to the
// controller; everything testable lives in the other modules.

import { SessionApi } from "./api.js";
import { compassPoint, describeTurn, distanceMeters } from "./arrow.js";
import { AppController } from "./controller.js";
import { drawMap } from "./mappanel.js";
import { ManualEntry, SimulatedProbe, type ReadingSource } from "./readings.js";
import type { SessionState } from "./types.js";

const POLL_MS = 2000;
const STALE_MS = 3 * POLL_MS;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function setText(id: string, text: string): void {
  el(id).textContent = text;
}

async function createDemoSession(api: SessionApi): Promise<void> {
  const status = el<HTMLElement>("setup-status");
  status.textContent = "waiting for GPS fix...";
  const pos = await new Promise<GeolocationPosition>((resolve, reject) =>
    navigator.geolocation.getCurrentPosition(resolve, reject, {
      enableHighAccuracy: true,
      timeout: 15000,
    }),
  );
  status.textContent = "creating session...";
  const extent = Number((el<HTMLInputElement>("setup-extent")).value) || 150;
  const created = await api.createSession({
    origin_lat: pos.coords.latitude,
    origin_lon: pos.coords.longitude,
    field_extent_m: [extent, extent],
    reading_target: Number((el<HTMLInputElement>("setup-target")).value) || 80,
    // solo demos: edge starts spread the first goals over distinct cells so
    // the map gets off the ground without a second operator
    placement_mode: "edges",
  });
  location.search = `?session=${created.session_id}`;
}

function headingFromEvent(ev: DeviceOrientationEvent): number | null {
  // iOS reports a ready-made compass heading; elsewhere alpha is usable only
  // when the event is absolute (relative alpha drifts with the page).
  const webkit = (ev as any).webkitCompassHeading;
  if (typeof webkit === "number" && Number.isFinite(webkit)) return webkit;
  if (ev.absolute && ev.alpha !== null) return (360 - ev.alpha) % 360;
  return null;
}

function boot(sessionId: string): void {
  el("setup").hidden = true;
  el("console").hidden = false;

  const api = new SessionApi("");
  const canvas = el<HTMLCanvasElement>("map");
  const ctx = canvas.getContext("2d");
  const simProbe = new SimulatedProbe(Date.now() >>> 0);
  let lastState: SessionState | null = null;
  let lastStateAt = 0;

  const controller = new AppController({ api, sessionId, onChange: render });

  function activeSource(): ReadingSource {
    if (el<HTMLInputElement>("sim-probe").checked) return simProbe;
    return new ManualEntry(async (label) => window.prompt(label));
  }

  function render(): void {
    const d = controller.directive;
    setText("session-label", `session ${sessionId.slice(0, 8)}`);
    setText(
      "progress",
      d ? `${d.progress.readings} / ${d.progress.target} readings` : "joining...",
    );

    const promptText: Record<string, string> = {
      navigate: "walk toward the goal",
      "in-cell": "you are in the goal cell: take a reading",
      submitting: "sending...",
      done: "session complete, head back",
    };
    setText("prompt", promptText[controller.prompt]);
    el("prompt").dataset.state = controller.prompt;

    const readBtn = el<HTMLButtonElement>("read-btn");
    readBtn.disabled = controller.prompt !== "in-cell";

    const arrow = el("arrow");
    const angle = controller.arrowAngle();
    if (angle !== null) {
      arrow.style.transform = `rotate(${angle}deg)`;
      arrow.style.opacity = "1";
      setText("turn-hint", describeTurn(angle));
    } else if (d && d.bearing_deg !== null) {
      // no compass: keep the arrow pointing up and name the absolute direction
      arrow.style.transform = "rotate(0deg)";
      arrow.style.opacity = "0.35";
      setText("turn-hint", `head ${compassPoint(d.bearing_deg)} (no compass)`);
    } else {
      setText("turn-hint", "");
    }

    if (d && d.goal_lat !== null && d.goal_lon !== null && controller.fix) {
      const m = distanceMeters(
        controller.fix.lat, controller.fix.lon, d.goal_lat, d.goal_lon,
      );
      setText("distance", `${m.toFixed(0)} m to goal`);
    } else {
      setText("distance", "");
    }

    setText("banner", controller.banner ?? controller.lastError ?? "");
    el("banner").hidden = !controller.banner && !controller.lastError;

    const stale = Date.now() - lastStateAt > STALE_MS;
    el("staleness").classList.toggle("stale", stale);
    setText("staleness", stale ? "map: no recent data" : "map: live");

    if (lastState && ctx) {
      const cellPx = Math.max(
        2,
        Math.floor(
          Math.min(
            canvas.width / lastState.grid.cols,
            canvas.height / lastState.grid.rows,
          ),
        ),
      );
      ctx.clearRect(0, 0, canvas.width, canvas.height);
      drawMap(ctx, lastState, controller.agentId, cellPx);
    }
  }

  async function poll(): Promise<void> {
    try {
      lastState = await api.getState(sessionId);
      lastStateAt = Date.now();
    } catch {
      // keep the stale map; the staleness label tells the operator
    }
    render();
  }

  el<HTMLButtonElement>("read-btn").addEventListener("click", () => {
    void controller.takeReading(activeSource());
  });

  const compassBtn = el<HTMLButtonElement>("compass-btn");
  const needsPermission =
    typeof (DeviceOrientationEvent as any)?.requestPermission === "function";
  compassBtn.hidden = !needsPermission;
  compassBtn.addEventListener("click", async () => {
    try {
      const verdict = await (DeviceOrientationEvent as any).requestPermission();
      if (verdict === "granted") compassBtn.hidden = true;
    } catch {
      /* stays visible for another try */
    }
  });

  window.addEventListener("deviceorientation", (ev) => {
    controller.onHeading(headingFromEvent(ev));
  });

  navigator.geolocation.watchPosition(
    (pos) => {
      void controller.onFix({
        lat: pos.coords.latitude,
        lon: pos.coords.longitude,
        accuracy_m: pos.coords.accuracy,
      });
    },
    (err) => {
      controller.lastError = `GPS: ${err.message}`;
      render();
    },
    { enableHighAccuracy: true, maximumAge: 500 },
  );

  void controller.join().catch((err) => {
    controller.lastError = err instanceof Error ? err.message : String(err);
    render();
  });
  void poll();
  setInterval(() => void poll(), POLL_MS);
}

const sessionId = new URLSearchParams(location.search).get("session");
if (sessionId) {
  boot(sessionId);
} else {
  el("console").hidden = true;
  el("setup").hidden = false;
  el<HTMLButtonElement>("setup-btn").addEventListener("click", () => {
    createDemoSession(new SessionApi("")).catch((err) => {
      setText("setup-status", err instanceof Error ? err.message : String(err));
    });
  });
}
