/**
 * SVG figure rendering.
 *
 * Everything is plain string building over the parsed rows, so identical
 * inputs always produce identical bytes.  Two figure kinds are supported:
 * per-node error CDFs (one curve per scheme/node, split into an x-error and
 * a y-error panel) and convergence traces (one line per coordinate).
 */

import type { CdfRow, ConvergenceRow } from "./csv.js";
import { SchemaMismatch } from "./errors.js";

const PALETTE = [
  "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
  "#9467bd", "#8c564b", "#17becf", "#e377c2",
  "#7f7f7f", "#bcbd22", "#393b79", "#ad494a",
];

export interface Series {
  label: string;
  points: Array<[number, number]>;
  color: string;
  dashed?: boolean;
}

export interface PanelOptions {
  title: string;
  xLabel: string;
  yLabel: string;
  width: number;
  height: number;
  xMax?: number;
  yMax?: number;
}

const fmt = (v: number): string => {
  const out = v.toFixed(2);
  return out === "-0.00" ? "0.00" : out;
};

function tickValues(lo: number, hi: number, count = 5): number[] {
  if (!(hi > lo)) {
    hi = lo + 1;
  }
  const rawStep = (hi - lo) / count;
  const magnitude = 10 ** Math.floor(Math.log10(rawStep));
  const candidates = [1, 2, 2.5, 5, 10].map((m) => m * magnitude);
  const step = candidates.find((s) => s >= rawStep) ?? candidates[4];
  const start = Math.ceil(lo / step) * step;
  const ticks: number[] = [];
  for (let v = start; v <= hi + 1e-12; v += step) {
    ticks.push(Number(v.toPrecision(12)));
  }
  return ticks;
}

/** One cartesian panel: axes, grid, tick labels, series polylines. */
export function renderPanel(series: Series[], opts: PanelOptions): string {
  const margin = { left: 52, right: 12, top: 26, bottom: 40 };
  const plotW = opts.width - margin.left - margin.right;
  const plotH = opts.height - margin.top - margin.bottom;

  let xMax = opts.xMax ?? 0;
  let yMax = opts.yMax ?? 0;
  let xMin = 0;
  let yMin = 0;
  if (opts.xMax === undefined) {
    for (const s of series) for (const [x] of s.points) xMax = Math.max(xMax, x);
  }
  if (opts.yMax === undefined) {
    for (const s of series) for (const [, y] of s.points) yMax = Math.max(yMax, y);
  }
  if (!(xMax > xMin)) xMax = xMin + 1;
  if (!(yMax > yMin)) yMax = yMin + 1;

  const sx = (x: number) => margin.left + ((x - xMin) / (xMax - xMin)) * plotW;
  const sy = (y: number) => margin.top + plotH - ((y - yMin) / (yMax - yMin)) * plotH;

  const parts: string[] = [];
  parts.push(
    `<rect x="${margin.left}" y="${margin.top}" width="${plotW}" height="${plotH}" fill="none" stroke="#333" stroke-width="1"/>`,
  );
  parts.push(
    `<text x="${margin.left + plotW / 2}" y="15" text-anchor="middle" font-size="13" font-weight="bold">${opts.title}</text>`,
  );
  for (const t of tickValues(xMin, xMax)) {
    const x = fmt(sx(t));
    parts.push(
      `<line x1="${x}" y1="${margin.top}" x2="${x}" y2="${margin.top + plotH}" stroke="#ddd" stroke-width="0.5"/>`,
      `<text x="${x}" y="${margin.top + plotH + 14}" text-anchor="middle" font-size="10">${t}</text>`,
    );
  }
  for (const t of tickValues(yMin, yMax)) {
    const y = fmt(sy(t));
    parts.push(
      `<line x1="${margin.left}" y1="${y}" x2="${margin.left + plotW}" y2="${y}" stroke="#ddd" stroke-width="0.5"/>`,
      `<text x="${margin.left - 5}" y="${y}" text-anchor="end" dominant-baseline="middle" font-size="10">${t}</text>`,
    );
  }
  parts.push(
    `<text x="${margin.left + plotW / 2}" y="${opts.height - 6}" text-anchor="middle" font-size="11">${opts.xLabel}</text>`,
    `<text x="14" y="${margin.top + plotH / 2}" text-anchor="middle" font-size="11" transform="rotate(-90 14 ${margin.top + plotH / 2})">${opts.yLabel}</text>`,
  );
  for (const s of series) {
    const pts = s.points
      .filter(([x, y]) => x <= xMax && y <= yMax)
      .map(([x, y]) => `${fmt(sx(x))},${fmt(sy(y))}`)
      .join(" ");
    const dash = s.dashed ? ' stroke-dasharray="6,3"' : "";
    parts.push(
      `<polyline class="series" data-label="${s.label}" points="${pts}" fill="none" stroke="${s.color}" stroke-width="1.5"${dash}/>`,
    );
  }
  return parts.join("\n");
}

function renderLegend(series: Series[], x: number, y: number): string {
  const parts = [`<g class="legend" transform="translate(${x},${y})">`];
  series.forEach((s, k) => {
    const row = k * 16;
    const dash = s.dashed ? ' stroke-dasharray="6,3"' : "";
    parts.push(
      `<line x1="0" y1="${row}" x2="22" y2="${row}" stroke="${s.color}" stroke-width="2"${dash}/>`,
      `<text x="28" y="${row + 4}" font-size="11">${s.label}</text>`,
    );
  });
  parts.push("</g>");
  return parts.join("\n");
}

function svgDocument(width: number, height: number, body: string): string {
  return [
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" viewBox="0 0 ${width} ${height}" font-family="sans-serif">`,
    `<rect width="${width}" height="${height}" fill="white"/>`,
    body,
    "</svg>",
    "",
  ].join("\n");
}

export interface CdfFigureOptions {
  nodes?: number[];
  xMax?: number;
  width?: number;
  height?: number;
}

/**
 * Error-CDF figure: an x-error panel and a y-error panel side by side, one
 * curve per scheme and node, legend on the right.
 */
export function renderCdfFigure(rows: CdfRow[], opts: CdfFigureOptions = {}): string {
  let selected = rows;
  if (opts.nodes !== undefined) {
    const keep = new Set(opts.nodes);
    selected = rows.filter((r) => keep.has(r.node));
  }
  if (selected.length === 0) {
    throw new SchemaMismatch("no CDF rows to plot after node filtering");
  }

  const schemes = [...new Set(selected.map((r) => r.scheme))].sort();
  const nodes = [...new Set(selected.map((r) => r.node))].sort((a, b) => a - b);

  const makeSeries = (coordinate: "x" | "y"): Series[] => {
    const series: Series[] = [];
    nodes.forEach((node, nk) => {
      schemes.forEach((scheme, sk) => {
        const points = selected
          .filter((r) => r.coordinate === coordinate && r.node === node && r.scheme === scheme)
          .sort((a, b) => a.error - b.error)
          .map((r): [number, number] => [r.error, r.cumFraction]);
        if (points.length > 0) {
          series.push({
            label: `${scheme} S${node}`,
            points,
            color: PALETTE[nk % PALETTE.length],
            dashed: sk % 2 === 1,
          });
        }
      });
    });
    return series;
  };

  const panelW = opts.width ?? 380;
  const panelH = opts.height ?? 300;
  const legendW = 150;
  const xSeries = makeSeries("x");
  const ySeries = makeSeries("y");
  const body = [
    `<g transform="translate(0,0)">`,
    renderPanel(xSeries, {
      title: "absolute x errors",
      xLabel: "error [m]",
      yLabel: "CDF",
      width: panelW,
      height: panelH,
      xMax: opts.xMax,
      yMax: 1,
    }),
    "</g>",
    `<g transform="translate(${panelW},0)">`,
    renderPanel(ySeries, {
      title: "absolute y errors",
      xLabel: "error [m]",
      yLabel: "CDF",
      width: panelW,
      height: panelH,
      xMax: opts.xMax,
      yMax: 1,
    }),
    "</g>",
    renderLegend(xSeries, 2 * panelW + 10, 30),
  ].join("\n");
  return svgDocument(2 * panelW + legendW, panelH, body);
}

export interface ConvergenceFigureOptions {
  width?: number;
  height?: number;
}

/** Convergence figure: mean absolute error per coordinate over iterations. */
export function renderConvergenceFigure(
  rows: ConvergenceRow[],
  opts: ConvergenceFigureOptions = {},
): string {
  if (rows.length === 0) {
    throw new SchemaMismatch("no convergence rows to plot");
  }
  const sorted = [...rows].sort((a, b) => a.iteration - b.iteration);
  const series: Series[] = [
    {
      label: "mean |x error|",
      points: sorted.map((r): [number, number] => [r.iteration, r.meanAbsErrX]),
      color: PALETTE[0],
    },
    {
      label: "mean |y error|",
      points: sorted.map((r): [number, number] => [r.iteration, r.meanAbsErrY]),
      color: PALETTE[1],
      dashed: true,
    },
  ];
  const width = opts.width ?? 520;
  const height = opts.height ?? 320;
  const body = [
    renderPanel(series, {
      title: "convergence of the mean absolute error",
      xLabel: "iteration",
      yLabel: "mean absolute error [m]",
      width,
      height,
    }),
    renderLegend(series, width + 10, 30),
  ].join("\n");
  return svgDocument(width + 150, height, body);
}
