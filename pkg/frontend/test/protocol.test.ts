import { describe, expect, it } from "vitest";

import { EvalRequestSchema, validateShapes } from "../src/protocol.js";
import { handleLine } from "../src/server.js";

function request(overrides: Record<string, unknown> = {}) {
  return {
    proto: 1,
    id: "r1",
    train: { features: [[0, 1], [1, null]], labels: [0, 1] },
    test: { features: [[0.5, 0.5]] },
    options: { max_rows: 512, seed: 42 },
    ...overrides,
  };
}

describe("request schema", () => {
  it("accepts nulls and finite doubles", () => {
    const parsed = EvalRequestSchema.parse(request());
    expect(parsed.train.features[1][1]).toBeNull();
    expect(parsed.options.max_rows).toBe(512);
  });

  it("defaults options when omitted", () => {
    const { options: _drop, ...bare } = request();
    const parsed = EvalRequestSchema.parse(bare);
    expect(parsed.options.max_rows).toBe(512);
    expect(parsed.options.seed).toBe(42);
  });

  it("rejects wrong proto version", () => {
    expect(EvalRequestSchema.safeParse(request({ proto: 2 })).success).toBe(false);
  });

  it("flags ragged matrices", () => {
    const req = EvalRequestSchema.parse(
      request({ train: { features: [[0, 1], [1]], labels: [0, 1] } }),
    );
    expect(validateShapes(req)).toMatch(/rectangular/);
  });

  it("flags label/row mismatch", () => {
    const req = EvalRequestSchema.parse(
      request({ train: { features: [[0, 1]], labels: [0, 1] } }),
    );
    expect(validateShapes(req)).toMatch(/labels/);
  });
});

describe("serialization round trip", () => {
  it("is lossless for finite doubles and nulls", () => {
    // JSON renders -0 as 0, so signed zero is the one double excluded here
    const values = [0, 1.5, -2.25, 1e-300, 1e300, 0.1 + 0.2, null];
    const req = request({
      train: { features: [values, values], labels: [0, 1] },
      test: { features: [values] },
    });
    const back = JSON.parse(JSON.stringify(req));
    expect(back.train.features[0]).toEqual(values);
    const parsed = EvalRequestSchema.parse(back);
    expect(parsed.test.features[0][3]).toBe(1e-300);
  });
});

describe("line handling", () => {
  it("answers malformed JSON with id null", () => {
    const resp = handleLine("{not json", "stub");
    expect(resp?.id).toBeNull();
    expect(resp?.error).toMatch(/malformed/);
  });

  it("echoes the id on validation errors when parseable", () => {
    const resp = handleLine(JSON.stringify({ proto: 1, id: "x" }), "stub");
    expect(resp?.id).toBe("x");
    expect(resp?.error).toBeTruthy();
  });

  it("ignores blank lines", () => {
    expect(handleLine("   ", "stub")).toBeNull();
  });

  it("real mode reports the missing backend but stays alive", () => {
    const resp = handleLine(JSON.stringify(request()), "real");
    expect(resp?.error).toMatch(/--stub/);
    expect(resp?.id).toBe("r1");
  });
});
