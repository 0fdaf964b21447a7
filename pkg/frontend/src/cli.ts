#!/usr/bin/env node
/**
 * Regenerate a figure from an archived run directory.
 *
 * Usage: contactctl-plot <kind> <run_dir> -o <path.svg>
 *   kind: gait | kappa_sweep | controller_compare | robustness
 *
 * Writes the SVG at the given path plus a PNG sibling. Inputs are schema-
 * validated first; nothing is written when validation fails (exit 2).
 */

import { writeFileSync } from "node:fs";
import { buildFigure, FIGURE_KINDS, FigureKind } from "./figures.js";
import { SchemaError } from "./schema.js";
import { toSvg } from "./svg.js";
import { toPng } from "./png.js";

export function main(argv: string[]): number {
  const args = argv.slice(2);
  if (args.length < 2) {
    console.error("usage: contactctl-plot <kind> <run_dir> [-o out.svg]");
    return 2;
  }
  const [kind, dir] = args;
  let out = `${kind}.svg`;
  const oi = args.indexOf("-o");
  if (oi >= 0 && args[oi + 1]) out = args[oi + 1];
  if (!FIGURE_KINDS.includes(kind as FigureKind)) {
    console.error(`unknown figure kind ${kind}; choices: ${FIGURE_KINDS.join(", ")}`);
    return 2;
  }
  try {
    const scene = buildFigure(kind as FigureKind, dir);
    const svg = toSvg(scene);
    const png = toPng(scene);
    writeFileSync(out, svg);
    writeFileSync(out.replace(/\.svg$/, "") + ".png", png);
    console.log(`wrote ${out} (+ png)`);
    return 0;
  } catch (e) {
    if (e instanceof SchemaError) {
      console.error(`schema validation failed: ${e.message}`);
      return 2;
    }
    console.error(`render failed: ${e}`);
    return 1;
  }
}

const isMain = process.argv[1] && import.meta.url.endsWith(process.argv[1].split("/").pop()!);
if (isMain) process.exit(main(process.argv));
