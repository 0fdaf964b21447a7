/** Input validation for run directories, before any figure is drawn. */

import { existsSync, readFileSync } from "node:fs";
import { join } from "node:path";
import { parseCsv, Table } from "./csv.js";

export class SchemaError extends Error {
  constructor(message: string, public offenders: string[] = []) {
    super(offenders.length ? `${message}: ${offenders.join(", ")}` : message);
  }
}

export const CONTACT_COLUMNS = ["t", "pair", "phi", "slip_sq", "fm_x", "fm_y", "fm_z", "fr_x", "fr_y", "fr_z"];
export const MPC_COLUMNS = ["t", "iters", "cost", "converged", "u_norm"];
export const COMPARE_COLUMNS = ["method", "avg_slippage", "avg_rotation_speed", "avg_joint_speed"];

export function readTable(dir: string, name: string, required: string[]): Table {
  const path = join(dir, name);
  if (!existsSync(path)) throw new SchemaError(`missing input file ${name}`);
  const table = parseCsv(readFileSync(path, "utf8"));
  const missing = required.filter((c) => !table.columns.includes(c));
  if (missing.length) throw new SchemaError(`${name} lacks required columns`, missing);
  return table;
}

export function readManifest(dir: string): Record<string, unknown> {
  const path = join(dir, "manifest.json");
  if (!existsSync(path)) throw new SchemaError("missing input file manifest.json");
  const m = JSON.parse(readFileSync(path, "utf8"));
  const missing = ["schema_version", "config", "config_hash", "state_columns"].filter((k) => !(k in m));
  if (missing.length) throw new SchemaError("manifest.json lacks required keys", missing);
  if (m.schema_version !== 1) throw new SchemaError(`unsupported schema_version ${m.schema_version}`);
  return m;
}

export function readJson(dir: string, name: string, required: string[]): Record<string, unknown> {
  const path = join(dir, name);
  if (!existsSync(path)) throw new SchemaError(`missing input file ${name}`);
  const m = JSON.parse(readFileSync(path, "utf8"));
  const missing = required.filter((k) => !(k in m));
  if (missing.length) throw new SchemaError(`${name} lacks required keys`, missing);
  return m;
}

/** states.csv has model-dependent columns; validate against the manifest. */
export function readStates(dir: string): Table {
  const manifest = readManifest(dir);
  const cols = manifest.state_columns as string[];
  return readTable(dir, "states.csv", cols);
}
