import { readFileSync } from "node:fs";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import { readCdfCsv, readConvergenceCsv } from "../src/csv.js";
import { SchemaMismatch } from "../src/errors.js";
import { renderCdfFigure, renderConvergenceFigure } from "../src/render.js";

const fixture = (name: string) => join(__dirname, "fixtures", name);

const countSeries = (svg: string) => (svg.match(/class="series"/g) ?? []).length;

describe("renderCdfFigure", () => {
  it("draws one curve per node and scheme in each panel", () => {
    const rows = [
      ...readCdfCsv(fixture("cdf_cooperative.csv")),
      ...readCdfCsv(fixture("cdf_pairwise.csv")),
    ];
    const svg = renderCdfFigure(rows);
    // 4 nodes x 2 schemes, once in the x panel and once in the y panel
    expect(countSeries(svg)).toBe(16);
    expect(svg).toContain('data-label="cooperative S3"');
    expect(svg).toContain('data-label="pairwise S4"');
    expect(svg.startsWith("<svg ")).toBe(true);
    expect(svg).toContain("</svg>");
  });

  it("legend names every scheme/node pair", () => {
    const rows = [
      ...readCdfCsv(fixture("cdf_cooperative.csv")),
      ...readCdfCsv(fixture("cdf_pairwise.csv")),
    ];
    const svg = renderCdfFigure(rows);
    const legend = svg.slice(svg.indexOf('class="legend"'));
    for (const scheme of ["cooperative", "pairwise"]) {
      for (const node of [1, 2, 3, 4]) {
        expect(legend).toContain(`${scheme} S${node}`);
      }
    }
  });

  it("node filtering drops curves", () => {
    const rows = readCdfCsv(fixture("cdf_cooperative.csv"));
    const svg = renderCdfFigure(rows, { nodes: [3, 4] });
    expect(countSeries(svg)).toBe(4);
    expect(svg).not.toContain('data-label="cooperative S1"');
  });

  it("is deterministic", () => {
    const rows = readCdfCsv(fixture("cdf_cooperative.csv"));
    expect(renderCdfFigure(rows)).toBe(renderCdfFigure(rows));
  });

  it("never mutates its input file", () => {
    const path = fixture("cdf_cooperative.csv");
    const before = readFileSync(path);
    renderCdfFigure(readCdfCsv(path));
    expect(readFileSync(path).equals(before)).toBe(true);
  });

  it("rejects an empty selection", () => {
    const rows = readCdfCsv(fixture("cdf_cooperative.csv"));
    expect(() => renderCdfFigure(rows, { nodes: [99] })).toThrow(SchemaMismatch);
  });
});

describe("renderConvergenceFigure", () => {
  it("draws one line per coordinate", () => {
    const rows = readConvergenceCsv(fixture("convergence.csv"));
    const svg = renderConvergenceFigure(rows);
    expect(countSeries(svg)).toBe(2);
    expect(svg).toContain("mean |x error|");
    expect(svg).toContain("mean |y error|");
    expect(svg).toContain("iteration");
  });

  it("is deterministic", () => {
    const rows = readConvergenceCsv(fixture("convergence.csv"));
    expect(renderConvergenceFigure(rows)).toBe(renderConvergenceFigure(rows));
  });

  it("rejects empty input", () => {
    expect(() => renderConvergenceFigure([])).toThrow(SchemaMismatch);
  });
});
