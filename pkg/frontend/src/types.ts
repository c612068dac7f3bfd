// Wire types for the coordinator's JSON API. Field names match the server
// payloads exactly; keep them in sync with the Python side.

export type DirectivePayload = {
  agent_id: string;
  goal_cell: [number, number] | null;
  goal_lat: number | null;
  goal_lon: number | null;
  bearing_deg: number | null;
  within_goal_cell: boolean;
  progress: { readings: number; target: number };
};

export type GridMapJson = {
  rows: number;
  cols: number;
  cell_size_m: number;
  kind: string;
  // row-major; null marks cells without a defined value (obstacles)
  values: (number | null)[];
};

export type AgentSummary = {
  id: string;
  goal_cell: [number, number] | null;
  last_fix: { lat: number; lon: number; accuracy_m: number } | null;
  readings: number;
};

export type SessionState = {
  session_id: string;
  complete: boolean;
  burn_in: boolean;
  readings: number;
  target: number;
  strategy: string;
  origin: { lat: number; lon: number };
  grid: { rows: number; cols: number; cell_size_m: number };
  agents: AgentSummary[];
  estimate: GridMapJson;
  uncertainty: GridMapJson;
};

export type Fix = { lat: number; lon: number; accuracy_m: number };

export type ReadingValues = { vwc: number; ec?: number; temp_c?: number };

export type PromptState = "navigate" | "in-cell" | "submitting" | "done";
