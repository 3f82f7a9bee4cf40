/**
 * Verdict buffering with batched, retried delivery.
 *
 * Verdicts accumulate locally and flush as one POST when the batch reaches
 * `flushEvery` items or `flushAfterMs` elapses since the first buffered
 * verdict, whichever comes first. At most one POST is in flight; a failed
 * batch returns to the front of the buffer and is retried with exponential
 * backoff. Nothing is ever dropped: every verdict is either acknowledged or
 * still buffered.
 */

import type { Verdict } from "./types";

export interface VerdictBufferOptions {
  flushEvery?: number;
  flushAfterMs?: number;
  retryBaseMs?: number;
  retryCapMs?: number;
  setTimer?: (fn: () => void, ms: number) => unknown;
  clearTimer?: (handle: unknown) => void;
}

export type PostFn = (batch: Verdict[]) => Promise<unknown>;

export class VerdictBuffer {
  private pending: Verdict[] = [];
  private inflight: Verdict[] | null = null;
  private ackedVerdicts: Verdict[] = [];
  private consecutiveFailures = 0;
  private timerHandle: unknown = null;
  private flushChain: Promise<void> = Promise.resolve();

  private readonly flushEvery: number;
  private readonly flushAfterMs: number;
  private readonly retryBaseMs: number;
  private readonly retryCapMs: number;
  private readonly setTimer: (fn: () => void, ms: number) => unknown;
  private readonly clearTimer: (handle: unknown) => void;

  /** Called once per acknowledged verdict, in submission order. */
  onAck: (verdict: Verdict) => void = () => {};
  /** Called whenever buffered/acked counts change (render hook). */
  onChange: () => void = () => {};

  constructor(
    private readonly post: PostFn,
    options: VerdictBufferOptions = {},
  ) {
    this.flushEvery = options.flushEvery ?? 20;
    this.flushAfterMs = options.flushAfterMs ?? 5000;
    this.retryBaseMs = options.retryBaseMs ?? 1000;
    this.retryCapMs = options.retryCapMs ?? 30_000;
    this.setTimer = options.setTimer ?? ((fn, ms) => setTimeout(fn, ms));
    this.clearTimer = options.clearTimer ?? ((handle) => clearTimeout(handle as number));
  }

  /** Buffer a verdict; a newer verdict for the same image replaces the old. */
  add(verdict: Verdict): void {
    const existing = this.pending.findIndex((v) => v.image_ref === verdict.image_ref);
    if (existing >= 0) {
      this.pending[existing] = verdict;
    } else {
      this.pending.push(verdict);
    }
    if (this.pending.length >= this.flushEvery) {
      void this.flush();
    } else if (this.timerHandle === null) {
      this.timerHandle = this.setTimer(() => {
        this.timerHandle = null;
        void this.flush();
      }, this.flushAfterMs);
    }
    this.onChange();
  }

  /** Verdicts acknowledged by the server so far. */
  get acked(): readonly Verdict[] {
    return this.ackedVerdicts;
  }

  get ackedCount(): number {
    return this.ackedVerdicts.length;
  }

  /** Verdicts still owed to the server (buffered plus in flight). */
  get bufferedCount(): number {
    return this.pending.length + (this.inflight?.length ?? 0);
  }

  /** True when a failed batch is waiting for its retry. */
  get retrying(): boolean {
    return this.consecutiveFailures > 0 && this.bufferedCount > 0;
  }

  /** Flush now (e.g. page hide); resolves when this attempt settles. */
  flush(): Promise<void> {
    this.flushChain = this.flushChain.then(() => this.attempt());
    return this.flushChain;
  }

  private async attempt(): Promise<void> {
    if (this.inflight !== null || this.pending.length === 0) {
      return;
    }
    if (this.timerHandle !== null) {
      this.clearTimer(this.timerHandle);
      this.timerHandle = null;
    }
    this.inflight = this.pending.splice(0, this.flushEvery);
    try {
      await this.post(this.inflight);
    } catch {
      // Return the batch to the front, keeping submission order.
      this.pending = [...this.inflight, ...this.pending];
      this.inflight = null;
      this.consecutiveFailures += 1;
      const backoff = Math.min(
        this.retryBaseMs * 2 ** (this.consecutiveFailures - 1),
        this.retryCapMs,
      );
      this.setTimer(() => void this.flush(), backoff);
      this.onChange();
      return;
    }
    const delivered = this.inflight;
    this.inflight = null;
    this.consecutiveFailures = 0;
    this.ackedVerdicts.push(...delivered);
    for (const verdict of delivered) {
      this.onAck(verdict);
    }
    this.onChange();
    if (this.pending.length >= this.flushEvery) {
      void this.flush();
    }
  }
}
