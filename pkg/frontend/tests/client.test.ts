import { describe, expect, it } from "vitest";

import { ndjsonLines } from "../src/client.js";

function streamOf(chunks: string[]): ReadableStream<Uint8Array> {
  const encoder = new TextEncoder();
  return new ReadableStream({
    start(controller) {
      for (const c of chunks) controller.enqueue(encoder.encode(c));
      controller.close();
    },
  });
}

async function collect(stream: ReadableStream<Uint8Array>): Promise<unknown[]> {
  const out: unknown[] = [];
  for await (const doc of ndjsonLines(stream)) out.push(doc);
  return out;
}

describe("ndjson stream parsing", () => {
  it("parses one document per line", async () => {
    const docs = await collect(streamOf(['{"a":1}\n{"a":2}\n']));
    expect(docs).toEqual([{ a: 1 }, { a: 2 }]);
  });

  it("handles documents split across chunks", async () => {
    const docs = await collect(streamOf(['{"phase":"INSER', 'TING","tick":5}\n{"tick":6}\n']));
    expect(docs).toEqual([{ phase: "INSERTING", tick: 5 }, { tick: 6 }]);
  });

  it("handles several documents in one chunk and skips blank lines", async () => {
    const docs = await collect(streamOf(['{"x":1}\n\n{"x":2}\n{"x":3}\n']));
    expect(docs).toEqual([{ x: 1 }, { x: 2 }, { x: 3 }]);
  });

  it("ignores a trailing partial line", async () => {
    const docs = await collect(streamOf(['{"x":1}\n{"x":', "2"]));
    expect(docs).toEqual([{ x: 1 }]);
  });
});
