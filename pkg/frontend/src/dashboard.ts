/**
 * Stats dashboard poller: per-class manifest counts and pipeline counters,
 * with a staleness flag when the service has not answered for 30 seconds.
 */

import type { ApiClient } from "./api";
import type { Stats } from "./types";

export interface DashboardOptions {
  pollIntervalMs?: number;
  staleAfterMs?: number;
  now?: () => number;
  setTimer?: (fn: () => void, ms: number) => unknown;
  clearTimer?: (handle: unknown) => void;
}

export class StatsDashboard {
  stats: Stats | null = null;
  lastSuccessAt: number | null = null;
  onUpdate: () => void = () => {};

  private timerHandle: unknown = null;
  private readonly pollIntervalMs: number;
  private readonly staleAfterMs: number;
  private readonly now: () => number;
  private readonly setTimer: (fn: () => void, ms: number) => unknown;
  private readonly clearTimer: (handle: unknown) => void;

  constructor(
    private readonly client: ApiClient,
    options: DashboardOptions = {},
  ) {
    this.pollIntervalMs = options.pollIntervalMs ?? 5000;
    this.staleAfterMs = options.staleAfterMs ?? 30_000;
    this.now = options.now ?? (() => Date.now());
    this.setTimer = options.setTimer ?? ((fn, ms) => setTimeout(fn, ms));
    this.clearTimer = options.clearTimer ?? ((handle) => clearTimeout(handle as number));
  }

  /** One poll; on failure the previous stats stay and staleness accrues. */
  async poll(): Promise<void> {
    try {
      this.stats = await this.client.getStats();
      this.lastSuccessAt = this.now();
    } catch {
      // keep stale data; isStale() reports the outage
    }
    this.onUpdate();
  }

  start(): void {
    const tick = async () => {
      await this.poll();
      this.timerHandle = this.setTimer(tick, this.pollIntervalMs);
    };
    void tick();
  }

  stop(): void {
    if (this.timerHandle !== null) {
      this.clearTimer(this.timerHandle);
      this.timerHandle = null;
    }
  }

  isStale(): boolean {
    if (this.lastSuccessAt === null) {
      return true;
    }
    return this.now() - this.lastSuccessAt > this.staleAfterMs;
  }

  classCounts(): Record<string, number> {
    return this.stats?.classes ?? {};
  }
}
