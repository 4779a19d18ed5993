// End-to-end test against a live `vcsim serve` process: the console's
// stream/feed core must show a new match within one second of the gateway
// emitting it, and a reconnect must resume from the cursor without
// duplicating feed rows.

import { ChildProcess, spawn } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { FeedStore, MemoryCursor } from "../src/feed.js";
import { LiveFeedConnection } from "../src/stream.js";
import type { MatchRow } from "../src/types.js";

const PORT = 18240 + (process.pid % 1000);
const BASE = `http://127.0.0.1:${PORT}`;
const PLATE = "AB123CD";

let server: ChildProcess | null = null;

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

async function waitForServer(timeoutMs: number): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  for (;;) {
    try {
      const resp = await fetch(`${BASE}/api/v1/metrics`);
      if (resp.status === 200) return;
    } catch {
      // not up yet
    }
    if (Date.now() > deadline) throw new Error("vcsim serve did not come up");
    await sleep(150);
  }
}

beforeAll(async () => {
  const dir = mkdtempSync(join(tmpdir(), "vcsim-e2e-"));
  const config = {
    seed: 5,
    vehicles: [{
      vehicle_id: 1,
      gen: {
        steps: 14, step_ms: 1000, plates: [PLATE], faces: [7], repeat_prob: 0.0,
      },
    }],
    workers: 2,
    modeled_times: null,
    links: {
      vehicle_rsu: { bandwidth_Bps: 200_000 },
      rsu_cloud: { bandwidth_Bps: 400_000 },
    },
    realtime: { time_scale: 4.0 },
    api: { host: "127.0.0.1", port: PORT },
  };
  const configPath = join(dir, "scenario.json");
  writeFileSync(configPath, JSON.stringify(config));
  server = spawn("python3", ["-m", "vcsim.cli", "serve", "--config", configPath],
                 { stdio: ["ignore", "pipe", "pipe"] });
  server.on("exit", (code) => {
    if (code && code !== 0) console.error(`vcsim serve exited with ${code}`);
  });
  await waitForServer(30_000);
}, 45_000);

afterAll(() => {
  server?.kill("SIGINT");
  server = null;
});

describe("console liveness against vcsim serve", () => {
  it("shows a feed row and marker within 1 s of the gateway match event",
     async () => {
    const api = new ApiClient(BASE);
    const feed = new FeedStore(new MemoryCursor());
    const received: Array<{ match: MatchRow; at: number }> = [];
    const conn = new LiveFeedConnection(api, feed, {
      onMatch: (m) => received.push({ match: m, at: Date.now() }),
    });
    conn.start();
    try {
      // the replaying vehicle shows this plate every step; watch it now
      const add = await api.watchlistAdd("plate", PLATE, "e2e target");
      expect(add.ok).toBe(true);
      const entryId = add.entryId!;

      // independently poll the server for the first match on this entry to
      // timestamp the gateway-side event
      let serverSawAt = 0;
      let firstServerMatch: MatchRow | null = null;
      const deadline = Date.now() + 20_000;
      while (Date.now() < deadline && firstServerMatch === null) {
        const matches = await api.matchesSince(0);
        const mine = matches.find((m) => m.entry_id === entryId);
        if (mine) {
          serverSawAt = Date.now();
          firstServerMatch = mine;
          break;
        }
        await sleep(40);
      }
      expect(firstServerMatch, "gateway never produced a match").not.toBeNull();

      // the feed (which is what the DOM renders) must have the row within 1 s
      const feedDeadline = serverSawAt + 1_000;
      let row = received.find((r) => r.match.match_id === firstServerMatch!.match_id);
      while (!row && Date.now() <= feedDeadline) {
        await sleep(20);
        row = received.find((r) => r.match.match_id === firstServerMatch!.match_id);
      }
      expect(row, "feed row not delivered within 1 s of the match").toBeTruthy();
      expect(row!.at - serverSawAt).toBeLessThanOrEqual(1_000);

      // and the map layer derives a marker for it
      const marker = feed.markers().find((m) => m.matchId === row!.match.match_id);
      expect(marker).toBeTruthy();
      expect(marker!.lat).toBeCloseTo(48.85, 1);
    } finally {
      conn.stop();
    }
  }, 40_000);

  it("bbox queries return exactly the markers the API reports, and crops load",
     async () => {
    const api = new ApiClient(BASE);
    const deadline = Date.now() + 20_000;
    let all = await api.detections({});
    while (all.length === 0 && Date.now() < deadline) {
      await sleep(100);
      all = await api.detections({});
    }
    expect(all.length).toBeGreaterThan(0);

    // tight box around one detection's fix: the explorer's marker set for it
    // must equal a client-side filter of the full list
    const target = all[0];
    const lat = target.lat_e7 / 1e7;
    const lon = target.lon_e7 / 1e7;
    const eps = 1e-6;
    const bbox: [number, number, number, number] =
      [lat - eps, lon - eps, lat + eps, lon + eps];
    const boxed = await api.detections({ bbox });
    const expected = all.filter((d) =>
      d.lat_e7 / 1e7 >= bbox[0] && d.lat_e7 / 1e7 <= bbox[2] &&
      d.lon_e7 / 1e7 >= bbox[1] && d.lon_e7 / 1e7 <= bbox[3]);
    expect(boxed.map((d) => d.detection_id).sort((a, b) => a - b))
      .toEqual(expected.map((d) => d.detection_id).sort((a, b) => a - b));
    expect(boxed.some((d) => d.detection_id === target.detection_id)).toBe(true);

    // clicking a plate/face marker loads its crop from the blob endpoint
    const withCrop = all.find((d) => d.crop_blob !== null);
    expect(withCrop, "no detection carries a crop").toBeTruthy();
    const resp = await fetch(api.blobUrl(withCrop!.crop_blob!));
    expect(resp.status).toBe(200);
    expect(resp.headers.get("content-type")).toBe("image/png");
    const bytes = new Uint8Array(await resp.arrayBuffer());
    expect(Array.from(bytes.slice(1, 4))).toEqual([0x50, 0x4e, 0x47]); // PNG
  }, 40_000);

  it("reconnects from the cursor without duplicate feed rows", async () => {
    const api = new ApiClient(BASE);
    const feed = new FeedStore(new MemoryCursor());
    const conn = new LiveFeedConnection(api, feed);
    conn.start();
    try {
      const deadline = Date.now() + 20_000;
      while (feed.rows.length < 2 && Date.now() < deadline) {
        await sleep(50);
      }
      expect(feed.rows.length).toBeGreaterThanOrEqual(2);

      conn.simulateDisconnect();
      const before = feed.rows.length;
      const moreDeadline = Date.now() + 20_000;
      while (feed.rows.length < before + 2 && Date.now() < moreDeadline) {
        await sleep(50);
      }
      expect(feed.rows.length).toBeGreaterThanOrEqual(before + 2);

      // no duplicates, strictly increasing, and a prefix-consistent copy of
      // the server's own sequence
      const ids = feed.orderedIds();
      expect(new Set(ids).size).toBe(ids.length);
      for (let i = 1; i < ids.length; i++) {
        expect(ids[i]).toBeGreaterThan(ids[i - 1]);
      }
      const serverIds = (await api.matchesSince(0)).map((m) => m.match_id);
      expect(ids).toEqual(serverIds.slice(0, ids.length));
    } finally {
      conn.stop();
    }
  }, 50_000);
});
