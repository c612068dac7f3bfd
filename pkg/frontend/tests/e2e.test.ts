// Full-stack check: a real coordinator process, scripted geolocation fixes,
// and manually "typed" values driving the same controller the page uses.

import { afterAll, beforeAll, expect, it } from "vitest";
import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync, readdirSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { SessionApi } from "../src/api.js";
import { AppController } from "../src/controller.js";
import { ManualEntry } from "../src/readings.js";

const PORT = 8300 + (process.pid % 500);
const BASE = `http://127.0.0.1:${PORT}`;

let server: ChildProcess | null = null;
let logDir: string;

const sleep = (ms: number) => new Promise((r) => setTimeout(r, ms));

beforeAll(async () => {
  logDir = mkdtempSync(join(tmpdir(), "fieldswarm-ui-"));
  server = spawn(
    "python3",
    ["-m", "fieldswarm.cli", "serve",
     "--port", String(PORT), "--host", "127.0.0.1", "--log-dir", logDir],
    { stdio: "ignore" },
  );
  const deadline = Date.now() + 30000;
  for (;;) {
    try {
      await fetch(`${BASE}/`);
      return;
    } catch {
      if (Date.now() > deadline) throw new Error("coordinator did not start");
      await sleep(250);
    }
  }
}, 40000);

afterAll(() => {
  server?.kill();
});

it("completes a 10-reading session from scripted fixes and manual entry", async () => {
  const api = new SessionApi(BASE);
  const created = await api.createSession({
    origin_lat: 47.0,
    origin_lon: 8.0,
    field_extent_m: [60, 60],
    cell_size_m: 10,
    strategy: "sbs",
    reading_target: 10,
    // edge start: a lone operator parked dead-center would otherwise keep
    // getting the same two central goal cells and the map never leaves
    // burn-in
    placement_mode: "edges",
    rng_seed: 7,
  });
  expect(created.join_url).toContain(created.session_id);

  // the operator "types" a fresh decimal for each reading
  const typed: number[] = [];
  let n = 0;
  const entry = new ManualEntry(async () => {
    const text = (0.08 + 0.021 * n++).toFixed(3);
    typed.push(Number(text));
    return text;
  });

  const c = new AppController({
    api,
    sessionId: created.session_id,
    fixIntervalMs: 0, // scripted fixes: no real-time throttling
  });
  await c.join();
  expect(c.agentId).not.toBeNull();
  expect(c.directive!.goal_cell).not.toBeNull();

  let hops = 0;
  while (!c.done) {
    expect(hops++).toBeLessThan(100);
    const d = c.directive!;
    expect(d.goal_lat).not.toBeNull();
    // walk: the next fix lands on the goal coordinates the server sent
    await c.onFix({ lat: d.goal_lat!, lon: d.goal_lon!, accuracy_m: 3.0 });
    if (!c.directive!.within_goal_cell) continue; // goal moved; chase it
    expect(await c.takeReading(entry)).toBe(true);
  }

  expect(c.directive!.progress.readings).toBe(10);
  expect(typed.length).toBe(10);

  const state = await api.getState(created.session_id);
  expect(state.complete).toBe(true);
  expect(state.readings).toBe(10);
  expect(state.agents.length).toBe(1);
  expect(state.estimate.values.length).toBe(36);

  // every accepted value in the server's event log equals the typed one,
  // decimal for decimal
  const logFile = readdirSync(logDir).find((f) => f.startsWith(created.session_id));
  expect(logFile).toBeDefined();
  const events = readFileSync(join(logDir, logFile!), "utf-8")
    .trim()
    .split("\n")
    .map((line) => JSON.parse(line));
  const readings = events.filter((e) => e.type === "ReadingAccepted");
  expect(readings.map((e) => e.payload.vwc)).toEqual(typed);

  // cells measured exactly once must surface their value in the estimate
  const byCell = new Map<string, number[]>();
  for (const e of readings) {
    const key = e.payload.cell.join(",");
    byCell.set(key, [...(byCell.get(key) ?? []), e.payload.vwc]);
  }
  let checked = 0;
  for (const [key, vals] of byCell) {
    if (vals.length !== 1) continue;
    const [row, col] = key.split(",").map(Number);
    const estimate = state.estimate.values[row * state.grid.cols + col];
    expect(estimate).not.toBeNull();
    expect(Math.abs((estimate as number) - vals[0])).toBeLessThanOrEqual(1e-6);
    checked++;
  }
  expect(checked).toBeGreaterThan(0);
}, 120000);
