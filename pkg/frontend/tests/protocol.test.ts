import { describe, expect, it } from "vitest";

import { LineSplitter, parseLine } from "../src/protocol.js";

describe("parseLine", () => {
  it("accepts a well-formed snapshot", () => {
    const line = JSON.stringify({
      v: 1,
      kind: "snapshot",
      t: 1.5,
      agents: [],
      mpe: null,
      ampe_running: null,
      alerts: [],
    });
    const result = parseLine(line);
    expect(result.ok).toBe(true);
    if (result.ok) expect(result.message.kind).toBe("snapshot");
  });

  it("rejects non-JSON without throwing", () => {
    const result = parseLine("this is not json");
    expect(result.ok).toBe(false);
  });

  it("rejects unknown kinds", () => {
    const result = parseLine(JSON.stringify({ kind: "telepathy" }));
    expect(result.ok).toBe(false);
  });

  it("rejects a snapshot missing its agents array", () => {
    const result = parseLine(JSON.stringify({ kind: "snapshot", t: 0 }));
    expect(result.ok).toBe(false);
  });
});

describe("LineSplitter", () => {
  it("reassembles lines across chunk boundaries", () => {
    const splitter = new LineSplitter();
    expect(splitter.push('{"a":')).toEqual([]);
    expect(splitter.push('1}\n{"b":2}\n{"c"')).toEqual(['{"a":1}', '{"b":2}']);
    expect(splitter.push(":3}\n")).toEqual(['{"c":3}']);
  });

  it("drops empty lines", () => {
    const splitter = new LineSplitter();
    expect(splitter.push("\n\n{}\n")).toEqual(["{}"]);
  });
});
