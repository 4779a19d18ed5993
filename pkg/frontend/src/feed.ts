// The match feed model: an ordered, duplicate-free mirror of the server's
// match sequence plus the persisted resume cursor. The DOM renders straight
// from this store, so its invariants are the UI's invariants.

import type { MatchRow } from "./types.js";

export interface CursorStorage {
  get(): number;
  set(cursor: number): void;
}

export class MemoryCursor implements CursorStorage {
  private value = 0;
  get(): number { return this.value; }
  set(cursor: number): void { this.value = cursor; }
}

export function localStorageCursor(key: string): CursorStorage {
  return {
    get(): number {
      const raw = globalThis.localStorage?.getItem(key);
      const n = raw === null || raw === undefined ? NaN : Number(raw);
      return Number.isFinite(n) && n >= 0 ? n : 0;
    },
    set(cursor: number): void {
      globalThis.localStorage?.setItem(key, String(cursor));
    },
  };
}

export interface FeedRow {
  match: MatchRow;
  receivedAtMs: number;
}

export interface FeedMarker {
  matchId: number;
  lat: number;
  lon: number;
}

export class FeedStore {
  /** newest first, exactly the server order reversed */
  readonly rows: FeedRow[] = [];
  private readonly seen = new Set<number>();
  private readonly storage: CursorStorage;

  constructor(storage?: CursorStorage) {
    this.storage = storage ?? new MemoryCursor();
  }

  get cursor(): number {
    return this.storage.get();
  }

  /** Apply one stream event; returns false for duplicates (e.g. replays). */
  apply(match: MatchRow, nowMs: number): boolean {
    if (this.seen.has(match.match_id)) {
      return false;
    }
    this.seen.add(match.match_id);
    this.rows.unshift({ match, receivedAtMs: nowMs });
    if (match.match_id > this.storage.get()) {
      this.storage.set(match.match_id);
    }
    return true;
  }

  /** match_ids oldest-to-newest; must equal the server sequence from 0. */
  orderedIds(): number[] {
    return this.rows.map((r) => r.match.match_id).reverse();
  }

  markers(): FeedMarker[] {
    return this.rows.map((r) => ({
      matchId: r.match.match_id,
      lat: r.match.lat_e7 / 1e7,
      lon: r.match.lon_e7 / 1e7,
    }));
  }

  latest(): FeedRow | undefined {
    return this.rows[0];
  }
}
