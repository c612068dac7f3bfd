// Reading sources. The probe hardware speaks over a local bridge we cannot
// assume exists, so acquisition hides behind one narrow interface: manual
// entry and a simulated probe ship by default, a sensor bridge plugs in.

import type { ReadingValues } from "./types.js";

export interface ReadingSource {
  readonly kind: "manual" | "simulated" | "sensor-bridge";
  get(): Promise<ReadingValues | null>; // null = operator cancelled
}

export class ManualEntry implements ReadingSource {
  readonly kind = "manual";
  private ask: (label: string) => Promise<string | null>;

  constructor(ask: (label: string) => Promise<string | null>) {
    this.ask = ask;
  }

  async get(): Promise<ReadingValues | null> {
    const raw = await this.ask("Volumetric water content (m3/m3)");
    if (raw === null) return null;
    const vwc = Number(raw.trim());
    if (!Number.isFinite(vwc)) throw new Error(`not a number: ${raw}`);
    return { vwc };
  }
}

export class SimulatedProbe implements ReadingSource {
  readonly kind = "simulated";
  private state: number;

  constructor(seed = 1) {
    this.state = seed >>> 0 || 1;
  }

  async get(): Promise<ReadingValues> {
    // xorshift32; plenty for a demo probe
    let x = this.state;
    x ^= x << 13; x >>>= 0;
    x ^= x >>> 17;
    x ^= x << 5; x >>>= 0;
    this.state = x;
    const u = x / 0xffffffff;
    return { vwc: 0.05 + 0.4 * u, ec: 150 + 400 * u, temp_c: 18 + 6 * u };
  }
}

export class SensorBridge implements ReadingSource {
  readonly kind = "sensor-bridge";
  private read: () => Promise<ReadingValues>;

  constructor(read: () => Promise<ReadingValues>) {
    this.read = read;
  }

  get(): Promise<ReadingValues | null> {
    return this.read();
  }
}
