import { describe, expect, it } from "vitest";

import { column, MissingColumnError, parseCsv } from "../src/csv.js";

describe("parseCsv", () => {
  it("parses numeric cells and keeps string ids", () => {
    const rows = parseCsv("method,epsilon,mse\ntrbsde,0.5,0.001\npnaa,0.5,0.02\n", [
      "method",
      "epsilon",
      "mse",
    ]);
    expect(rows).toHaveLength(2);
    expect(rows[0].method).toBe("trbsde");
    expect(rows[1].mse).toBeCloseTo(0.02);
    expect(column(rows, "epsilon")).toEqual([0.5, 0.5]);
  });

  it("names the missing column in its error", () => {
    expect(() => parseCsv("a,b\n1,2\n", ["a", "beta"], "finetune_hist.csv")).toThrowError(
      /missing column "beta" in finetune_hist.csv/,
    );
    expect(() => parseCsv("a,b\n1,2\n", ["a", "beta"])).toThrow(MissingColumnError);
  });

  it("rejects empty files", () => {
    expect(() => parseCsv("", ["x"])).toThrow(/empty/);
  });
});
