// Canvas rendering of the in-progress estimate map. The drawing surface is
// a narrow interface so tests can pass a recording fake instead of a DOM
// canvas context.

import type { SessionState } from "./types.js";

export interface Surface {
  fillStyle: string | CanvasGradient | CanvasPattern;
  strokeStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  globalAlpha: number;
  font: string;
  textAlign: CanvasTextAlign;
  textBaseline: CanvasTextBaseline;
  fillRect(x: number, y: number, w: number, h: number): void;
  strokeRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  fill(): void;
  fillText(text: string, x: number, y: number): void;
}

const METERS_PER_DEG_LAT = (6371000 * Math.PI) / 180;

// Same flat projection as the server: origin at the corner of cell (0,0),
// rows grow north, columns grow east. Clamped to the grid for display.
export function geoToCell(
  origin: { lat: number; lon: number },
  grid: { rows: number; cols: number; cell_size_m: number },
  lat: number,
  lon: number,
): { row: number; col: number } {
  const north = (lat - origin.lat) * METERS_PER_DEG_LAT;
  const east = (lon - origin.lon) * METERS_PER_DEG_LAT * Math.cos((origin.lat * Math.PI) / 180);
  const row = Math.floor(north / grid.cell_size_m);
  const col = Math.floor(east / grid.cell_size_m);
  return {
    row: Math.min(Math.max(row, 0), grid.rows - 1),
    col: Math.min(Math.max(col, 0), grid.cols - 1),
  };
}

// Low = deep blue, high = warm yellow; obstacles stay dark.
export function rampColor(t: number): string {
  const stops: [number, number, number][] = [
    [38, 70, 160],
    [60, 160, 135],
    [235, 210, 80],
  ];
  const x = Math.min(Math.max(t, 0), 1) * (stops.length - 1);
  const i = Math.min(Math.floor(x), stops.length - 2);
  const f = x - i;
  const mix = (a: number, b: number) => Math.round(a + (b - a) * f);
  const [r, g, b] = [0, 1, 2].map((k) => mix(stops[i][k], stops[i + 1][k]));
  return `rgb(${r},${g},${b})`;
}

export type DrawStats = { cellsDrawn: number; burnInOverlay: boolean };

export function drawMap(
  ctx: Surface,
  state: SessionState,
  selfId: string | null,
  cellPx: number,
): DrawStats {
  const { rows, cols } = state.estimate;
  const values = state.estimate.values;
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of values) {
    if (v === null) continue;
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  const span = hi > lo ? hi - lo : 1;

  // row 0 is the south edge; canvas y grows downward
  const yOf = (row: number) => (rows - 1 - row) * cellPx;
  let cellsDrawn = 0;
  for (let r = 0; r < rows; r++) {
    for (let c = 0; c < cols; c++) {
      const v = values[r * cols + c];
      ctx.fillStyle = v === null ? "#2b2b2b" : rampColor((v - lo) / span);
      ctx.fillRect(c * cellPx, yOf(r), cellPx, cellPx);
      cellsDrawn++;
    }
  }

  for (const agent of state.agents) {
    const mine = agent.id === selfId;
    if (agent.goal_cell && mine) {
      const [gr, gc] = agent.goal_cell;
      ctx.strokeStyle = "#ff3333";
      ctx.lineWidth = 2;
      ctx.strokeRect(gc * cellPx + 1, yOf(gr) + 1, cellPx - 2, cellPx - 2);
    }
    if (agent.last_fix) {
      const cell = geoToCell(state.origin, state.grid, agent.last_fix.lat, agent.last_fix.lon);
      ctx.fillStyle = mine ? "#ffffff" : "#dddddd";
      ctx.beginPath();
      ctx.arc(
        cell.col * cellPx + cellPx / 2,
        yOf(cell.row) + cellPx / 2,
        mine ? cellPx * 0.3 : cellPx * 0.18,
        0,
        Math.PI * 2,
      );
      ctx.fill();
    }
  }

  if (state.burn_in) {
    ctx.globalAlpha = 0.55;
    ctx.fillStyle = "#000000";
    ctx.fillRect(0, 0, cols * cellPx, rows * cellPx);
    ctx.globalAlpha = 1;
    ctx.fillStyle = "#ffffff";
    ctx.font = `${Math.max(12, cellPx)}px sans-serif`;
    ctx.textAlign = "center";
    ctx.textBaseline = "middle";
    ctx.fillText("insufficient data", (cols * cellPx) / 2, (rows * cellPx) / 2);
  }

  return { cellsDrawn, burnInOverlay: state.burn_in };
}
