// Thin typed client over the gateway's JSON endpoints.

import type { DetectionRow, MatchRow, WatchlistRow } from "./types.js";

export interface DetectionQuery {
  kind?: string;
  value?: string | number;
  from?: number;
  to?: number;
  /** degrees: [minLat, minLon, maxLat, maxLon] */
  bbox?: [number, number, number, number];
}

export interface AddResult {
  ok: boolean;
  status: number;
  entryId?: number;
  error?: string;
}

type FetchLike = typeof fetch;

export class ApiClient {
  constructor(readonly baseUrl: string,
              private readonly fetchImpl: FetchLike = fetch) {}

  private url(path: string, params?: Record<string, string>): string {
    const u = new URL(path, this.baseUrl);
    if (params) {
      for (const [k, v] of Object.entries(params)) {
        u.searchParams.set(k, v);
      }
    }
    return u.toString();
  }

  async watchlist(): Promise<WatchlistRow[]> {
    const resp = await this.fetchImpl(this.url("/api/v1/watchlist"));
    return (await resp.json()) as WatchlistRow[];
  }

  async watchlistAdd(kind: string, value: string | number,
                     label: string): Promise<AddResult> {
    const resp = await this.fetchImpl(this.url("/api/v1/watchlist"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ kind, value, label }),
    });
    const body = (await resp.json()) as { entry_id?: number; error?: string };
    if (resp.status === 201) {
      return { ok: true, status: 201, entryId: body.entry_id };
    }
    return { ok: false, status: resp.status, error: body.error ?? "request failed" };
  }

  async watchlistRemove(entryId: number): Promise<boolean> {
    const resp = await this.fetchImpl(this.url(`/api/v1/watchlist/${entryId}`),
                                      { method: "DELETE" });
    return resp.status === 200;
  }

  async rescan(entryId: number): Promise<number> {
    const resp = await this.fetchImpl(
      this.url(`/api/v1/watchlist/${entryId}/rescan`), { method: "POST" });
    if (resp.status !== 200) return 0;
    const body = (await resp.json()) as { new_matches: number };
    return body.new_matches;
  }

  async detections(query: DetectionQuery): Promise<DetectionRow[]> {
    const params: Record<string, string> = {};
    if (query.kind) params.kind = query.kind;
    if (query.value !== undefined) params.value = String(query.value);
    if (query.from !== undefined) params.from = String(query.from);
    if (query.to !== undefined) params.to = String(query.to);
    if (query.bbox) params.bbox = query.bbox.join(",");
    const resp = await this.fetchImpl(this.url("/api/v1/detections", params));
    if (resp.status !== 200) {
      throw new Error(`detections query failed: ${resp.status}`);
    }
    return (await resp.json()) as DetectionRow[];
  }

  async matchesSince(cursor: number): Promise<MatchRow[]> {
    const resp = await this.fetchImpl(
      this.url("/api/v1/matches", { since: String(cursor) }));
    return (await resp.json()) as MatchRow[];
  }

  blobUrl(digest: string): string {
    return this.url(`/api/v1/blobs/${digest}`);
  }

  eventsUrl(since: number): string {
    return this.url("/api/v1/events", { since: String(since) });
  }

  async metrics(): Promise<Record<string, unknown>> {
    const resp = await this.fetchImpl(this.url("/api/v1/metrics"));
    return (await resp.json()) as Record<string, unknown>;
  }
}
