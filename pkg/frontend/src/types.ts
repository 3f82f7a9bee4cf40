/** Shared types mirroring the service API payloads. */

/** Fixed class order; must match the server's five-class scheme exactly. */
export const CLASS_ORDER = ["dry", "wet", "snow", "offline", "poor"] as const;

export type RoadClass = (typeof CLASS_ORDER)[number];

export interface QueueItem {
  image_ref: string;
  image_url: string;
  pseudo_label: RoadClass;
  confidence: number;
  phase: string;
}

export type VerdictKind = "acceptable" | "refused" | "poor" | "relabel";

export interface Verdict {
  image_ref: string;
  verdict: VerdictKind;
  relabel_to?: RoadClass;
}

export interface JudgmentCounts {
  acceptable: number;
  refused: number;
}

export interface JudgmentTable {
  per_class: Record<RoadClass, JudgmentCounts>;
  total: JudgmentCounts;
}

export interface Stats {
  classes: Record<string, number>;
  pending_review: number;
  queue_length: number;
  verdicts_applied: number;
  judgment: JudgmentTable;
  judgment_canonical: string;
  counters: Record<string, number>;
}

export interface RecordRow {
  camera_id: string;
  timestamp: string;
  class: RoadClass;
  confidence: number;
  latitude: number;
  longitude: number;
}
