import { describe, expect, it } from "vitest";

import { ndjsonValues, streamFromStrings } from "../src/ndjson.js";

async function collect(chunks: string[]): Promise<unknown[]> {
  const out: unknown[] = [];
  for await (const value of ndjsonValues(streamFromStrings(chunks))) {
    out.push(value);
  }
  return out;
}

describe("ndjsonValues", () => {
  it("parses one object per line", async () => {
    const got = await collect(['{"a":1}\n{"a":2}\n']);
    expect(got).toEqual([{ a: 1 }, { a: 2 }]);
  });

  it("reassembles objects split across chunks", async () => {
    const got = await collect(['{"match_', 'id":41,"x"', ':true}\n{"match_id":42}\n']);
    expect(got).toEqual([{ match_id: 41, x: true }, { match_id: 42 }]);
  });

  it("skips heartbeat blank lines", async () => {
    const got = await collect(["\n\n", '{"a":1}\n', "\n", '{"a":2}\n\n']);
    expect(got).toEqual([{ a: 1 }, { a: 2 }]);
  });

  it("yields a trailing object without a final newline", async () => {
    const got = await collect(['{"a":1}\n{"a":', "2}"]);
    expect(got).toEqual([{ a: 1 }, { a: 2 }]);
  });

  it("handles multi-byte characters across chunk boundaries", async () => {
    const text = '{"label":"útil"}\n';
    const bytes = new TextEncoder().encode(text);
    const stream = new ReadableStream<Uint8Array>({
      start(controller) {
        controller.enqueue(bytes.slice(0, 12)); // cuts the ú in half
        controller.enqueue(bytes.slice(12));
        controller.close();
      },
    });
    const out: unknown[] = [];
    for await (const value of ndjsonValues(stream)) out.push(value);
    expect(out).toEqual([{ label: "útil" }]);
  });
});
