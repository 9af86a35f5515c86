/**
 * plotviz --kind cdf|convergence --in CSV... --out IMG [--nodes 3,4]
 *         [--xmax F] [--width N] [--height N]
 *
 * Reads the experiment CSV artifacts and writes one SVG figure.  Multiple
 * --in files of the same kind are merged (e.g. the cooperative and pairwise
 * CDF files of one run).  Exit code 0 on success, 1 on a schema or file
 * error, 2 on bad usage.
 */

import { writeFileSync } from "node:fs";

import { readCdfCsv, readConvergenceCsv } from "./csv.js";
import { MissingFile, SchemaMismatch } from "./errors.js";
import { renderCdfFigure, renderConvergenceFigure } from "./render.js";

export interface CliOptions {
  kind: "cdf" | "convergence";
  inputs: string[];
  out: string;
  nodes?: number[];
  xMax?: number;
  width?: number;
  height?: number;
}

export function parseArgs(argv: string[]): CliOptions {
  let kind: string | undefined;
  const inputs: string[] = [];
  let out: string | undefined;
  let nodes: number[] | undefined;
  let xMax: number | undefined;
  let width: number | undefined;
  let height: number | undefined;

  let k = 0;
  const next = (flag: string): string => {
    k += 1;
    if (k >= argv.length) {
      throw new UsageError(`${flag} needs a value`);
    }
    return argv[k];
  };
  for (; k < argv.length; k++) {
    const arg = argv[k];
    switch (arg) {
      case "--kind":
        kind = next(arg);
        break;
      case "--in":
        while (k + 1 < argv.length && !argv[k + 1].startsWith("--")) {
          k += 1;
          inputs.push(argv[k]);
        }
        break;
      case "--out":
        out = next(arg);
        break;
      case "--nodes":
        nodes = next(arg).split(",").map((s) => {
          const v = Number(s);
          if (!Number.isInteger(v)) {
            throw new UsageError(`--nodes expects integers, got "${s}"`);
          }
          return v;
        });
        break;
      case "--xmax":
        xMax = Number(next(arg));
        break;
      case "--width":
        width = Number(next(arg));
        break;
      case "--height":
        height = Number(next(arg));
        break;
      default:
        throw new UsageError(`unknown argument: ${arg}`);
    }
  }
  if (kind !== "cdf" && kind !== "convergence") {
    throw new UsageError("--kind must be cdf or convergence");
  }
  if (inputs.length === 0) {
    throw new UsageError("at least one --in file is required");
  }
  if (out === undefined) {
    throw new UsageError("--out is required");
  }
  return { kind, inputs, out, nodes, xMax, width, height };
}

export class UsageError extends Error {}

export function run(options: CliOptions): string {
  let svg: string;
  if (options.kind === "cdf") {
    const rows = options.inputs.flatMap((path) => readCdfCsv(path));
    svg = renderCdfFigure(rows, {
      nodes: options.nodes,
      xMax: options.xMax,
      width: options.width,
      height: options.height,
    });
  } else {
    if (options.inputs.length !== 1) {
      throw new UsageError("convergence figures take exactly one --in file");
    }
    const rows = readConvergenceCsv(options.inputs[0]);
    svg = renderConvergenceFigure(rows, {
      width: options.width,
      height: options.height,
    });
  }
  writeFileSync(options.out, svg);
  return options.out;
}

export function main(argv: string[]): number {
  try {
    const options = parseArgs(argv);
    const written = run(options);
    process.stderr.write(`wrote ${written}\n`);
    return 0;
  } catch (err) {
    if (err instanceof UsageError) {
      process.stderr.write(`usage error: ${err.message}\n`);
      process.stderr.write(
        "usage: plotviz --kind cdf|convergence --in CSV... --out IMG\n",
      );
      return 2;
    }
    if (err instanceof SchemaMismatch || err instanceof MissingFile) {
      process.stderr.write(`${err.name}: ${err.message}\n`);
      return 1;
    }
    throw err;
  }
}

if (process.argv[1] && process.argv[1].endsWith("cli.js")) {
  process.exit(main(process.argv.slice(2)));
}
