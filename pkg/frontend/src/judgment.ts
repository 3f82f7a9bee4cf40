/**
 * Judgment audit mode: a seeded random sample of classified images is
 * marked acceptable or refused (nothing else), and the per-class summary
 * renders live. The summary's canonical JSON must match the server's
 * recomputation byte for byte, so it is built in the fixed class order
 * with compact separators.
 */

import type { JudgmentTable, QueueItem, RoadClass, Verdict } from "./types";
import { CLASS_ORDER } from "./types";
import type { VerdictBuffer } from "./verdicts";

/** Deterministic 32-bit PRNG (mulberry32); same seed, same sequence. */
export function mulberry32(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

/** Seeded sample without replacement, order deterministic per seed. */
export function seededSample<T>(items: readonly T[], size: number, seed: number): T[] {
  const pool = [...items];
  const random = mulberry32(seed);
  for (let i = pool.length - 1; i > 0; i--) {
    const j = Math.floor(random() * (i + 1));
    [pool[i], pool[j]] = [pool[j], pool[i]];
  }
  return pool.slice(0, Math.min(size, pool.length));
}

export function emptyTable(): JudgmentTable {
  return {
    per_class: Object.fromEntries(
      CLASS_ORDER.map((c) => [c, { acceptable: 0, refused: 0 }]),
    ) as JudgmentTable["per_class"],
    total: { acceptable: 0, refused: 0 },
  };
}

/** Compact JSON with keys in scheme order; must equal the server's bytes. */
export function canonicalJson(table: JudgmentTable): string {
  const perClass = CLASS_ORDER.map(
    (c) =>
      `"${c}":{"acceptable":${table.per_class[c].acceptable},"refused":${table.per_class[c].refused}}`,
  ).join(",");
  return `{"per_class":{${perClass}},"total":{"acceptable":${table.total.acceptable},"refused":${table.total.refused}}}`;
}

export class JudgmentSession {
  readonly sample: QueueItem[];
  readonly shortfall: number;
  private cursor = 0;
  private ackedTable = emptyTable();

  constructor(
    items: readonly QueueItem[],
    sampleSize: number,
    seed: number,
    private readonly buffer: VerdictBuffer,
  ) {
    this.sample = seededSample(items, sampleSize, seed);
    this.shortfall = Math.max(0, sampleSize - this.sample.length);
    buffer.onAck = (verdict) => this.tallyAck(verdict);
  }

  current(): QueueItem | null {
    return this.cursor < this.sample.length ? this.sample[this.cursor] : null;
  }

  get position(): number {
    return this.cursor;
  }

  get done(): boolean {
    return this.cursor >= this.sample.length;
  }

  /** Server-confirmed tallies; equals the live view once everything acks. */
  get summary(): JudgmentTable {
    return this.ackedTable;
  }

  canonicalSummary(): string {
    return canonicalJson(this.ackedTable);
  }

  /** Only `a` (acceptable) and `r` (refused) act in judgment mode. */
  handleKey(key: string): boolean {
    const item = this.current();
    if (item === null || (key !== "a" && key !== "r")) {
      return false;
    }
    this.buffer.add({
      image_ref: item.image_ref,
      verdict: key === "a" ? "acceptable" : "refused",
    });
    this.cursor += 1;
    return true;
  }

  private tallyAck(verdict: Verdict): void {
    const item = this.sample.find((q) => q.image_ref === verdict.image_ref);
    if (item === undefined) {
      return;
    }
    const cls: RoadClass = item.pseudo_label;
    if (verdict.verdict === "acceptable") {
      this.ackedTable.per_class[cls].acceptable += 1;
      this.ackedTable.total.acceptable += 1;
    } else if (verdict.verdict === "refused") {
      this.ackedTable.per_class[cls].refused += 1;
      this.ackedTable.total.refused += 1;
    }
  }
}
