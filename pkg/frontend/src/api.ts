/** Typed client for the labelling/pipeline service API. */

import type { QueueItem, RecordRow, Stats, Verdict } from "./types";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async get<T>(path: string): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`);
    if (!response.ok) {
      throw new ApiError(response.status, `GET ${path} -> ${response.status}`);
    }
    return (await response.json()) as T;
  }

  getQueue(): Promise<QueueItem[]> {
    return this.get<QueueItem[]>("/api/queue");
  }

  getStats(): Promise<Stats> {
    return this.get<Stats>("/api/stats");
  }

  getRecords(limit = 50): Promise<RecordRow[]> {
    return this.get<RecordRow[]>(`/api/records?limit=${limit}`);
  }

  imageUrl(item: QueueItem): string {
    return `${this.baseUrl}${item.image_url}`;
  }

  async postVerdicts(batch: Verdict[]): Promise<number> {
    const response = await this.fetchFn(`${this.baseUrl}/api/verdicts`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(batch),
    });
    if (!response.ok) {
      throw new ApiError(response.status, `POST /api/verdicts -> ${response.status}`);
    }
    const payload = (await response.json()) as { applied: number };
    return payload.applied;
  }
}
