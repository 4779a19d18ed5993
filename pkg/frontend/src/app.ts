// DOM wiring for the operator console. All state the UI renders lives in the
// tested core modules (FeedStore, ApiClient, MapView projection); this file
// only moves it in and out of the page.

import { ApiClient, DetectionQuery } from "./api.js";
import { FeedStore, localStorageCursor } from "./feed.js";
import { LiveFeedConnection } from "./stream.js";
import { MapView } from "./map.js";
import { validateEntry } from "./validate.js";
import type { DetectionRow, MatchRow, WatchlistRow } from "./types.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function fmtTime(ms: number): string {
  return new Date(ms).toISOString().replace("T", " ").replace("Z", "");
}

function fmtCoord(e7: number): string {
  return (e7 / 1e7).toFixed(5);
}

class ConsoleApp {
  readonly api: ApiClient;
  readonly feed: FeedStore;
  readonly live: LiveFeedConnection;
  readonly map: MapView;
  private detectionsById = new Map<number, DetectionRow>();
  private watchlist: WatchlistRow[] = [];
  private filter: DetectionQuery = {};

  constructor(baseUrl: string) {
    this.api = new ApiClient(baseUrl);
    this.feed = new FeedStore(localStorageCursor(`vcsim-cursor:${baseUrl}`));
    this.map = new MapView(el<HTMLCanvasElement>("map"), {
      onSelect: (det) => this.showDetail(det),
      onBboxDrawn: (bbox) => {
        this.filter.bbox = bbox.map((v) => Number(v.toFixed(7))) as
          [number, number, number, number];
        el<HTMLInputElement>("filter-bbox").value = this.filter.bbox.join(",");
        void this.refreshDetections();
      },
    });
    this.live = new LiveFeedConnection(this.api, this.feed, {
      onMatch: (m) => this.onMatch(m),
      onStatus: (connected) => this.onStatus(connected),
    });
  }

  async start(): Promise<void> {
    this.bindForms();
    await this.refreshWatchlist();
    await this.refreshDetections();
    this.renderFeed();
    this.live.start();
  }

  // -- watchlist ----------------------------------------------------------

  private bindForms(): void {
    el<HTMLFormElement>("watchlist-form").addEventListener("submit", (ev) => {
      ev.preventDefault();
      void this.submitWatchlist();
    });
    el<HTMLButtonElement>("filter-apply").addEventListener("click", () => {
      this.readFilterControls();
      void this.refreshDetections();
    });
    el<HTMLButtonElement>("filter-clear").addEventListener("click", () => {
      this.filter = {};
      (el<HTMLSelectElement>("filter-kind")).value = "";
      el<HTMLInputElement>("filter-from").value = "";
      el<HTMLInputElement>("filter-to").value = "";
      el<HTMLInputElement>("filter-bbox").value = "";
      void this.refreshDetections();
    });
  }

  private async submitWatchlist(): Promise<void> {
    const kind = el<HTMLSelectElement>("wl-kind").value;
    const raw = el<HTMLInputElement>("wl-value").value;
    const label = el<HTMLInputElement>("wl-label").value;
    const note = el<HTMLElement>("wl-message");
    const checked = validateEntry(kind, raw);
    if (!checked.ok) {
      note.textContent = checked.message;
      note.className = "msg error";
      return;
    }
    try {
      const result = await this.api.watchlistAdd(
        checked.entry.kind, checked.entry.value, label);
      if (result.ok) {
        note.textContent = `added as entry ${result.entryId}`;
        note.className = "msg ok";
        el<HTMLInputElement>("wl-value").value = "";
        el<HTMLInputElement>("wl-label").value = "";
        await this.refreshWatchlist();
      } else if (result.status === 409) {
        note.textContent = "already on the watchlist";
        note.className = "msg error";
      } else {
        note.textContent = result.error ?? "rejected";
        note.className = "msg error";
      }
    } catch {
      note.textContent = "network failure; submit again";
      note.className = "msg error";
    }
  }

  private async refreshWatchlist(): Promise<void> {
    try {
      this.watchlist = await this.api.watchlist();
    } catch {
      return;
    }
    const list = el<HTMLUListElement>("watchlist");
    list.textContent = "";
    for (const entry of this.watchlist) {
      const li = document.createElement("li");
      const text = document.createElement("span");
      text.textContent = `#${entry.entry_id} ${entry.kind} ${entry.value}` +
        (entry.label ? ` — ${entry.label}` : "");
      li.appendChild(text);
      const rescan = document.createElement("button");
      rescan.textContent = "rescan";
      rescan.addEventListener("click", () => void this.api.rescan(entry.entry_id));
      li.appendChild(rescan);
      const remove = document.createElement("button");
      remove.textContent = "remove";
      remove.addEventListener("click", async () => {
        await this.api.watchlistRemove(entry.entry_id);
        await this.refreshWatchlist();
      });
      li.appendChild(remove);
      list.appendChild(li);
    }
  }

  // -- live feed ----------------------------------------------------------

  private onStatus(connected: boolean): void {
    const banner = el<HTMLElement>("stream-banner");
    banner.textContent = connected
      ? "live"
      : "stream disconnected — reconnecting";
    banner.className = connected ? "banner ok" : "banner warn";
  }

  private onMatch(match: MatchRow): void {
    this.renderFeed();
    this.map.setHighlights(this.feed.markers());
    if (!this.detectionsById.has(match.detection_id)) {
      void this.refreshDetections();
    }
  }

  private renderFeed(): void {
    const list = el<HTMLUListElement>("feed");
    list.textContent = "";
    for (const row of this.feed.rows.slice(0, 100)) {
      const entry = this.watchlist.find((e) => e.entry_id === row.match.entry_id);
      const li = document.createElement("li");
      li.textContent =
        `match #${row.match.match_id} · entry ${row.match.entry_id}` +
        (entry ? ` (${entry.kind} ${entry.value})` : "") +
        ` · det ${row.match.detection_id}` +
        ` · ${fmtCoord(row.match.lat_e7)}, ${fmtCoord(row.match.lon_e7)}`;
      li.addEventListener("click", () => {
        const det = this.detectionsById.get(row.match.detection_id);
        if (det) this.showDetail(det);
      });
      list.appendChild(li);
    }
    el<HTMLElement>("feed-count").textContent =
      `${this.feed.rows.length} matches, cursor ${this.feed.cursor}`;
  }

  // -- detection explorer --------------------------------------------------

  private readFilterControls(): void {
    this.filter = {};
    const kind = el<HTMLSelectElement>("filter-kind").value;
    if (kind) this.filter.kind = kind;
    const from = el<HTMLInputElement>("filter-from").value;
    if (from) this.filter.from = Number(from);
    const to = el<HTMLInputElement>("filter-to").value;
    if (to) this.filter.to = Number(to);
    const bbox = el<HTMLInputElement>("filter-bbox").value.trim();
    if (bbox) {
      const parts = bbox.split(",").map(Number);
      if (parts.length === 4 && parts.every(Number.isFinite)) {
        this.filter.bbox = parts as [number, number, number, number];
      }
    }
  }

  private async refreshDetections(): Promise<void> {
    let rows: DetectionRow[];
    try {
      rows = await this.api.detections(this.filter);
    } catch {
      el<HTMLElement>("explorer-status").textContent = "query failed";
      return;
    }
    this.detectionsById = new Map(rows.map((d) => [d.detection_id, d]));
    this.map.setDetections(rows);
    el<HTMLElement>("explorer-status").textContent =
      rows.length === 0 ? "no detections" : `${rows.length} detections`;
  }

  private showDetail(det: DetectionRow): void {
    this.map.setSelected(det.detection_id);
    el<HTMLElement>("detail-title").textContent =
      `detection #${det.detection_id} (${det.kind})`;
    el<HTMLElement>("detail-body").textContent =
      `value: ${det.value === "" ? "—" : det.value}\n` +
      `position: ${fmtCoord(det.lat_e7)}, ${fmtCoord(det.lon_e7)}\n` +
      `captured: ${fmtTime(det.timestamp_ms)}\n` +
      `processed by: ${det.worker_id} at t+${(det.detected_at_ms / 1000).toFixed(2)}s\n` +
      `frame: ${det.source_frame}`;
    const img = el<HTMLImageElement>("detail-crop");
    if (det.crop_blob) {
      img.src = this.api.blobUrl(det.crop_blob);
      img.style.display = "block";
    } else {
      img.style.display = "none";
    }
  }
}

const baseUrl =
  new URLSearchParams(window.location.search).get("gateway") ??
  window.location.origin;
const app = new ConsoleApp(baseUrl);
void app.start();
