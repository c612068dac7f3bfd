// Session flow for one operator. Pure state machine around the API client;
// the DOM layer and the tests both drive it through the same methods.

import { ApiError, SessionApi, newToken } from "./api.js";
import { renderArrow } from "./arrow.js";
import type { DirectivePayload, Fix, PromptState, ReadingValues } from "./types.js";
import type { ReadingSource } from "./readings.js";

export type ControllerOptions = {
  api: SessionApi;
  sessionId: string;
  // injected clock so tests control the 1 Hz fix cadence
  now?: () => number;
  fixIntervalMs?: number;
  onChange?: () => void;
};

type Draft = { values: ReadingValues; token: string };

export class AppController {
  readonly api: SessionApi;
  readonly sessionId: string;
  agentId: string | null = null;
  directive: DirectivePayload | null = null;
  fix: Fix | null = null;
  heading: number | null = null;
  banner: string | null = null;
  lastError: string | null = null;

  private nowFn: () => number;
  private fixIntervalMs: number;
  private onChange: () => void;
  private lastFixPost = -Infinity;
  private fixInFlight = false;
  private busy = false; // whole takeReading critical section
  private submitting = false; // network phase only; drives the prompt
  private draft: Draft | null = null;

  constructor(opts: ControllerOptions) {
    this.api = opts.api;
    this.sessionId = opts.sessionId;
    this.nowFn = opts.now ?? (() => Date.now());
    this.fixIntervalMs = opts.fixIntervalMs ?? 1000;
    this.onChange = opts.onChange ?? (() => {});
  }

  async join(): Promise<void> {
    const res = await this.api.join(this.sessionId);
    this.agentId = res.agent_id;
    this.directive = res.directive;
    this.onChange();
  }

  get prompt(): PromptState {
    if (this.done) return "done";
    if (this.submitting) return "submitting";
    if (this.directive && this.directive.within_goal_cell) return "in-cell";
    return "navigate";
  }

  get done(): boolean {
    const d = this.directive;
    return d !== null && d.progress.readings >= d.progress.target;
  }

  get hasDraft(): boolean {
    return this.draft !== null;
  }

  // Screen-relative arrow, or null when the compass is unavailable and the
  // view should fall back to an absolute compass rose.
  arrowAngle(): number | null {
    if (this.directive === null || this.directive.bearing_deg === null) return null;
    if (this.heading === null) return null;
    return renderArrow(this.directive.bearing_deg, this.heading);
  }

  onHeading(headingDeg: number | null): void {
    this.heading = headingDeg;
    this.onChange();
  }

  // Called on every geolocation fix; posts to the server at most once per
  // fixIntervalMs and never with a previous post still in flight.
  async onFix(fix: Fix): Promise<void> {
    this.fix = fix;
    const now = this.nowFn();
    if (this.fixInFlight || now - this.lastFixPost < this.fixIntervalMs) {
      this.onChange();
      return;
    }
    if (this.agentId === null) return;
    this.fixInFlight = true;
    this.lastFixPost = now;
    try {
      this.directive = await this.api.reportFix(this.sessionId, this.agentId, fix);
      this.banner = null;
      this.lastError = null;
    } catch (err) {
      this.absorb(err, "position update failed");
    } finally {
      this.fixInFlight = false;
      this.onChange();
    }
  }

  // Reading flow. Never submits unless the current directive says the
  // operator stands in the goal cell; a failed submit keeps the entered
  // value and its idempotency token so retrying cannot double-count.
  async takeReading(source: ReadingSource): Promise<boolean> {
    // guard covers value acquisition too: a second tap arriving while the
    // entry dialog is open must not mint a second draft and token
    if (this.busy) return false;
    const d = this.directive;
    if (!d || !d.within_goal_cell || this.done) return false;
    if (this.agentId === null || this.fix === null) return false;

    this.busy = true;
    try {
      let draft = this.draft;
      if (draft === null) {
        const values = await source.get();
        if (values === null) return false;
        draft = { values, token: newToken() };
        this.draft = draft;
      }

      this.submitting = true;
      this.onChange();
      try {
        this.directive = await this.api.submitReading(
          this.sessionId, this.agentId, this.fix, draft.values, draft.token,
        );
        this.draft = null;
        this.banner = null;
        this.lastError = null;
        return true;
      } catch (err) {
        if (err instanceof ApiError && err.status === 422 && err.directive) {
          // fix drifted out of the field: the value is tied to a bad position,
          // drop it and navigate with the refreshed directive
          this.directive = err.directive;
          this.draft = null;
          this.banner = "Reading rejected: outside the field. Keep walking to the goal.";
        } else {
          this.absorb(err, "submit failed, value kept for retry");
        }
        return false;
      } finally {
        this.submitting = false;
      }
    } finally {
      this.busy = false;
      this.onChange();
    }
  }

  private absorb(err: unknown, note: string): void {
    const msg = err instanceof Error ? err.message : String(err);
    this.lastError = `${note} (${msg})`;
  }
}
