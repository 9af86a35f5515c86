/**
 * Strict readers for the experiment CSV artifacts.
 *
 * The files are plain comma-separated with a fixed header row and LF line
 * endings; anything that deviates from the documented schema raises
 * SchemaMismatch rather than being silently coerced.
 */

import { existsSync, readFileSync } from "node:fs";

import { MissingFile, SchemaMismatch } from "./errors.js";

export const CDF_HEADER = "scheme,node,coordinate,error_m,cum_fraction";
export const CONVERGENCE_HEADER = "iteration,mean_abs_err_x_m,mean_abs_err_y_m";

export interface CdfRow {
  scheme: string;
  node: number;
  coordinate: "x" | "y";
  error: number;
  cumFraction: number;
}

export interface ConvergenceRow {
  iteration: number;
  meanAbsErrX: number;
  meanAbsErrY: number;
}

function readLines(path: string, expectedHeader: string): string[] {
  if (!existsSync(path)) {
    throw new MissingFile(`no such file: ${path}`);
  }
  const text = readFileSync(path, "utf8");
  const lines = text.split("\n").filter((line) => line.length > 0);
  if (lines.length === 0) {
    throw new SchemaMismatch(`${path}: file is empty`);
  }
  if (lines[0] !== expectedHeader) {
    throw new SchemaMismatch(
      `${path}: header "${lines[0]}" does not match "${expectedHeader}"`,
    );
  }
  if (lines.length === 1) {
    throw new SchemaMismatch(`${path}: no data rows`);
  }
  return lines.slice(1);
}

function num(path: string, line: number, field: string, raw: string): number {
  const value = Number(raw);
  if (raw.trim() === "" || Number.isNaN(value)) {
    throw new SchemaMismatch(`${path}:${line}: ${field} is not a number: "${raw}"`);
  }
  return value;
}

export function readCdfCsv(path: string): CdfRow[] {
  const rows: CdfRow[] = [];
  readLines(path, CDF_HEADER).forEach((line, k) => {
    const parts = line.split(",");
    if (parts.length !== 5) {
      throw new SchemaMismatch(`${path}:${k + 2}: expected 5 fields, got ${parts.length}`);
    }
    const [scheme, node, coordinate, error, fraction] = parts;
    if (coordinate !== "x" && coordinate !== "y") {
      throw new SchemaMismatch(`${path}:${k + 2}: coordinate must be x or y`);
    }
    const cumFraction = num(path, k + 2, "cum_fraction", fraction);
    if (cumFraction < 0 || cumFraction > 1) {
      throw new SchemaMismatch(`${path}:${k + 2}: cum_fraction ${cumFraction} outside [0, 1]`);
    }
    rows.push({
      scheme,
      node: num(path, k + 2, "node", node),
      coordinate,
      error: num(path, k + 2, "error_m", error),
      cumFraction,
    });
  });
  return rows;
}

export function readConvergenceCsv(path: string): ConvergenceRow[] {
  const rows: ConvergenceRow[] = [];
  readLines(path, CONVERGENCE_HEADER).forEach((line, k) => {
    const parts = line.split(",");
    if (parts.length !== 3) {
      throw new SchemaMismatch(`${path}:${k + 2}: expected 3 fields, got ${parts.length}`);
    }
    rows.push({
      iteration: num(path, k + 2, "iteration", parts[0]),
      meanAbsErrX: num(path, k + 2, "mean_abs_err_x_m", parts[1]),
      meanAbsErrY: num(path, k + 2, "mean_abs_err_y_m", parts[2]),
    });
  });
  return rows;
}
