// Live connection to the gateway's NDJSON match stream with cursor resume:
// reconnects pick up exactly after the last applied match, so a flaky link
// never duplicates or drops feed rows.

import type { ApiClient } from "./api.js";
import type { FeedStore } from "./feed.js";
import type { MatchRow } from "./types.js";
import { ndjsonValues } from "./ndjson.js";

export interface StreamHandlers {
  onMatch?(match: MatchRow): void;
  onStatus?(connected: boolean): void;
}

const BACKOFF_START_MS = 500;
const BACKOFF_MAX_MS = 10_000;

export class LiveFeedConnection {
  private controller: AbortController | null = null;
  private stopped = false;
  private backoffMs = BACKOFF_START_MS;
  connected = false;

  constructor(private readonly api: ApiClient,
              private readonly feed: FeedStore,
              private readonly handlers: StreamHandlers = {},
              private readonly nowMs: () => number = () => Date.now()) {}

  start(): void {
    this.stopped = false;
    void this.loop();
  }

  stop(): void {
    this.stopped = true;
    this.controller?.abort();
  }

  /** Drop the socket without stopping; the loop reconnects from the cursor. */
  simulateDisconnect(): void {
    this.controller?.abort();
  }

  private setConnected(connected: boolean): void {
    if (this.connected !== connected) {
      this.connected = connected;
      this.handlers.onStatus?.(connected);
    }
  }

  private async loop(): Promise<void> {
    while (!this.stopped) {
      this.controller = new AbortController();
      try {
        const resp = await fetch(this.api.eventsUrl(this.feed.cursor),
                                 { signal: this.controller.signal });
        if (resp.status !== 200 || resp.body === null) {
          throw new Error(`stream rejected: ${resp.status}`);
        }
        this.setConnected(true);
        this.backoffMs = BACKOFF_START_MS;
        for await (const value of ndjsonValues(resp.body)) {
          const match = value as MatchRow;
          if (this.feed.apply(match, this.nowMs())) {
            this.handlers.onMatch?.(match);
          }
        }
      } catch {
        // aborted or connection lost; fall through to reconnect
      }
      this.setConnected(false);
      if (this.stopped) return;
      await sleep(this.backoffMs);
      this.backoffMs = Math.min(this.backoffMs * 2, BACKOFF_MAX_MS);
    }
  }
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}
