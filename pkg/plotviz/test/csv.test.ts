import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import { CDF_HEADER, readCdfCsv, readConvergenceCsv } from "../src/csv.js";
import { MissingFile, SchemaMismatch } from "../src/errors.js";

const fixture = (name: string) => join(__dirname, "fixtures", name);

function tempFile(content: string): string {
  const dir = mkdtempSync(join(tmpdir(), "plotviz-"));
  const path = join(dir, "data.csv");
  writeFileSync(path, content);
  return path;
}

describe("readCdfCsv", () => {
  it("reads the real artifact", () => {
    const rows = readCdfCsv(fixture("cdf_cooperative.csv"));
    expect(rows.length).toBe(200 * 4 * 2);
    expect(new Set(rows.map((r) => r.scheme))).toEqual(new Set(["cooperative"]));
    expect(new Set(rows.map((r) => r.node))).toEqual(new Set([1, 2, 3, 4]));
    for (const row of rows) {
      expect(row.cumFraction).toBeGreaterThan(0);
      expect(row.cumFraction).toBeLessThanOrEqual(1);
    }
  });

  it("cumulative fractions are nondecreasing per series and end at 1", () => {
    const rows = readCdfCsv(fixture("cdf_pairwise.csv"));
    for (const node of [1, 2, 3, 4]) {
      for (const coordinate of ["x", "y"] as const) {
        const series = rows.filter(
          (r) => r.node === node && r.coordinate === coordinate,
        );
        for (let k = 1; k < series.length; k++) {
          expect(series[k].cumFraction).toBeGreaterThanOrEqual(
            series[k - 1].cumFraction,
          );
        }
        expect(series[series.length - 1].cumFraction).toBe(1);
      }
    }
  });

  it("rejects a corrupted header", () => {
    const path = tempFile("scheme,node,coord,error_m,cum_fraction\na,1,x,1,0.5\n");
    expect(() => readCdfCsv(path)).toThrow(SchemaMismatch);
  });

  it("rejects an empty file", () => {
    expect(() => readCdfCsv(tempFile(""))).toThrow(SchemaMismatch);
  });

  it("rejects a header-only file", () => {
    expect(() => readCdfCsv(tempFile(CDF_HEADER + "\n"))).toThrow(SchemaMismatch);
  });

  it("rejects non-numeric fields", () => {
    const path = tempFile(`${CDF_HEADER}\ncooperative,1,x,abc,0.5\n`);
    expect(() => readCdfCsv(path)).toThrow(SchemaMismatch);
  });

  it("rejects an out-of-range fraction", () => {
    const path = tempFile(`${CDF_HEADER}\ncooperative,1,x,1.0,1.5\n`);
    expect(() => readCdfCsv(path)).toThrow(SchemaMismatch);
  });

  it("rejects a bad coordinate", () => {
    const path = tempFile(`${CDF_HEADER}\ncooperative,1,z,1.0,0.5\n`);
    expect(() => readCdfCsv(path)).toThrow(SchemaMismatch);
  });

  it("reports a missing file as such", () => {
    expect(() => readCdfCsv("/nonexistent/errors.csv")).toThrow(MissingFile);
  });
});

describe("readConvergenceCsv", () => {
  it("reads the real artifact", () => {
    const rows = readConvergenceCsv(fixture("convergence.csv"));
    expect(rows.length).toBeGreaterThan(10);
    expect(rows[0].iteration).toBe(0);
    expect(rows[0].meanAbsErrX).toBeGreaterThan(0);
  });

  it("rejects the cdf schema", () => {
    expect(() => readConvergenceCsv(fixture("cdf_cooperative.csv"))).toThrow(
      SchemaMismatch,
    );
  });
});
