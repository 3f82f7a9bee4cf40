/**
 * Keyboard-driven review session over the pseudo-label queue.
 *
 * Keys: `a` acceptable, `r` refused, `p` poor, `1`-`5` relabel to the
 * class at that position. The per-class tally counts acknowledged verdicts
 * only, so a failed POST leaves it unchanged while the retry badge shows;
 * the optimistic cursor still advances so reviewing is never blocked.
 */

import type { QueueItem, RoadClass, Verdict } from "./types";
import { CLASS_ORDER } from "./types";
import type { VerdictBuffer } from "./verdicts";

const KEY_TO_KIND: Record<string, Verdict["verdict"]> = {
  a: "acceptable",
  r: "refused",
  p: "poor",
};

export class ReviewSession {
  private cursor = 0;
  private tallyByClass: Record<RoadClass, number>;
  keyPresses = 0;

  constructor(
    readonly queue: QueueItem[],
    private readonly buffer: VerdictBuffer,
  ) {
    this.tallyByClass = Object.fromEntries(CLASS_ORDER.map((c) => [c, 0])) as Record<
      RoadClass,
      number
    >;
    buffer.onAck = (verdict) => {
      const cls = this.finalClass(verdict);
      if (cls !== null) {
        this.tallyByClass[cls] += 1;
      }
    };
  }

  /** The item under review, or null when the queue is exhausted. */
  current(): QueueItem | null {
    return this.cursor < this.queue.length ? this.queue[this.cursor] : null;
  }

  get position(): number {
    return this.cursor;
  }

  get done(): boolean {
    return this.cursor >= this.queue.length;
  }

  /** Acknowledged verdicts tallied by their resulting class. */
  get tally(): Readonly<Record<RoadClass, number>> {
    return this.tallyByClass;
  }

  get retryBadge(): boolean {
    return this.buffer.retrying;
  }

  /** Image URLs to prefetch so the next reviews render instantly. */
  prefetchWindow(size = 10): string[] {
    return this.queue.slice(this.cursor + 1, this.cursor + 1 + size).map((q) => q.image_url);
  }

  /** Handle one key press; returns true when it produced a verdict. */
  handleKey(key: string): boolean {
    const item = this.current();
    if (item === null) {
      return false;
    }
    let verdict: Verdict | null = null;
    const kind = KEY_TO_KIND[key];
    if (kind !== undefined) {
      verdict = { image_ref: item.image_ref, verdict: kind };
    } else if (/^[1-5]$/.test(key)) {
      const target = CLASS_ORDER[Number(key) - 1];
      verdict = { image_ref: item.image_ref, verdict: "relabel", relabel_to: target };
    }
    if (verdict === null) {
      return false;
    }
    this.keyPresses += 1;
    this.buffer.add(verdict);
    this.cursor += 1;
    return true;
  }

  private finalClass(verdict: Verdict): RoadClass | null {
    switch (verdict.verdict) {
      case "refused":
        return null;
      case "poor":
        return "poor";
      case "relabel":
        return verdict.relabel_to ?? null;
      case "acceptable": {
        const item = this.queue.find((q) => q.image_ref === verdict.image_ref);
        return item?.pseudo_label ?? null;
      }
    }
  }
}
