/** ReviewSession: key handling, acknowledged-only tally, prefetch. */

import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { ReviewSession } from "../src/session";
import type { QueueItem, Verdict } from "../src/types";
import { VerdictBuffer } from "../src/verdicts";

function queueItems(n: number): QueueItem[] {
  return Array.from({ length: n }, (_, i) => ({
    image_ref: `ref${i}`,
    image_url: `/images/q${i}`,
    pseudo_label: "wet",
    confidence: 0.8,
    phase: "p",
  }));
}

describe("ReviewSession", () => {
  beforeEach(() => vi.useFakeTimers());
  afterEach(() => vi.useRealTimers());

  it("maps keys to verdicts and advances", async () => {
    const batches: Verdict[][] = [];
    const buffer = new VerdictBuffer(async (b) => {
      batches.push([...b]);
    });
    const session = new ReviewSession(queueItems(4), buffer);
    expect(session.handleKey("a")).toBe(true);
    expect(session.handleKey("3")).toBe(true); // relabel to snow
    expect(session.handleKey("p")).toBe(true);
    expect(session.handleKey("x")).toBe(false); // unbound key
    expect(session.handleKey("r")).toBe(true);
    expect(session.done).toBe(true);
    await vi.advanceTimersByTimeAsync(5000);
    const sent = batches.flat();
    expect(sent.map((v) => v.verdict)).toEqual(["acceptable", "relabel", "poor", "refused"]);
    expect(sent[1].relabel_to).toBe("snow");
  });

  it("tally counts only acknowledged verdicts (rollback on failure)", async () => {
    let fail = true;
    const buffer = new VerdictBuffer(
      async () => {
        if (fail) throw new Error("http 500");
      },
      { retryBaseMs: 100 },
    );
    const session = new ReviewSession(queueItems(2), buffer);
    session.handleKey("a"); // pseudo-label wet
    await vi.advanceTimersByTimeAsync(5000);
    expect(session.tally.wet).toBe(0); // failed POST: tally unchanged
    expect(session.retryBadge).toBe(true);
    fail = false;
    await vi.advanceTimersByTimeAsync(1000);
    expect(session.tally.wet).toBe(1);
    expect(session.retryBadge).toBe(false);
  });

  it("relabel and poor verdicts tally under their target class", async () => {
    const buffer = new VerdictBuffer(async () => {});
    const session = new ReviewSession(queueItems(3), buffer);
    session.handleKey("5"); // relabel to poor
    session.handleKey("p");
    session.handleKey("r"); // refused: not tallied
    await vi.runAllTimersAsync();
    expect(session.tally.poor).toBe(2);
    expect(session.tally.wet).toBe(0);
    expect(session.keyPresses).toBe(3);
    expect(buffer.ackedCount).toBe(3);
  });

  it("prefetches the next ten image urls", () => {
    const buffer = new VerdictBuffer(async () => {});
    const session = new ReviewSession(queueItems(15), buffer);
    expect(session.prefetchWindow()).toHaveLength(10);
    expect(session.prefetchWindow()[0]).toBe("/images/q1");
    session.handleKey("a");
    expect(session.prefetchWindow()[0]).toBe("/images/q2");
  });
});
