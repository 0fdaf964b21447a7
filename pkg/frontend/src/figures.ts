/**
 * The four figure kinds regenerated from archived experiment outputs.
 * Strictly read-only over the CSV/JSON contract; nothing is recomputed
 * beyond plotting transforms.
 */

import { existsSync, readFileSync } from "node:fs";
import { join } from "node:path";
import { columnIndex, numbers } from "./csv.js";
import { AxisBox, drawAxes, mapX, mapY, PALETTE, Scene } from "./svg.js";
import {
  COMPARE_COLUMNS,
  CONTACT_COLUMNS,
  MPC_COLUMNS,
  readJson,
  readManifest,
  readStates,
  readTable,
  SchemaError,
} from "./schema.js";

export const FIGURE_KINDS = ["gait", "kappa_sweep", "controller_compare", "robustness"] as const;
export type FigureKind = (typeof FIGURE_KINDS)[number];

const CONTACT_EVENT_PHI = 3e-3;

// ----------------------------------------------------------------------
export function gaitFigure(runDir: string): Scene {
  readManifest(runDir);
  const contacts = readTable(runDir, "contacts.csv", CONTACT_COLUMNS);
  const states = readStates(runDir);

  const it = columnIndex(contacts, "t");
  const ipair = columnIndex(contacts, "pair");
  const iphi = columnIndex(contacts, "phi");
  const pairs = [...new Set(contacts.rows.map((r) => r[ipair]))].sort();
  if (pairs.length === 0) throw new SchemaError("gait figure needs at least one contact pair");

  const ts = numbers(states, "t");
  const yawCol = states.columns.includes("qo2") ? "qo2" : "qo0";
  const yaw = numbers(states, yawCol);
  const t0 = Math.min(...ts);
  const t1 = Math.max(...ts);

  const scene = new Scene(760, 120 + pairs.length * 60 + 60);
  scene.text(380, 22, "finger gait: shaded = contact (phi < 3 mm), grey = object yaw", 13, "middle");

  // per-pair contact lanes
  pairs.forEach((pair, lane) => {
    const y0 = 40 + lane * 60;
    const box: AxisBox = { x0: 70, y0, w: 640, h: 44, xmin: t0, xmax: t1, ymin: 0, ymax: 1 };
    scene.text(64, y0 + 26, pair, 10, "end");
    scene.line(
      [
        [box.x0, y0 + 44],
        [box.x0 + box.w, y0 + 44],
      ],
      "#999",
      0.8,
    );
    const rows = contacts.rows.filter((r) => r[ipair] === pair);
    let start: number | null = null;
    let prevT = t0;
    const color = PALETTE[lane % PALETTE.length];
    for (const r of rows) {
      const t = Number(r[it]);
      const inside = Number(r[iphi]) < CONTACT_EVENT_PHI;
      if (inside && start === null) start = t;
      if (!inside && start !== null) {
        scene.rect(mapX(box, start), y0 + 4, Math.max(mapX(box, prevT) - mapX(box, start), 1), 36, color, 0.45);
        start = null;
      }
      prevT = t;
    }
    if (start !== null) {
      scene.rect(mapX(box, start), y0 + 4, Math.max(mapX(box, prevT) - mapX(box, start), 1), 36, color, 0.45);
    }
  });

  // yaw overlay at the bottom
  const yb: AxisBox = {
    x0: 70,
    y0: 50 + pairs.length * 60,
    w: 640,
    h: 70,
    xmin: t0,
    xmax: t1,
    ymin: Math.min(...yaw),
    ymax: Math.max(...yaw) + 1e-9,
  };
  drawAxes(scene, yb, "time (s)", "yaw (rad)");
  scene.line(ts.map((t, i) => [mapX(yb, t), mapY(yb, yaw[i])] as [number, number]), "#777", 1.4);
  return scene;
}

// ----------------------------------------------------------------------
export function kappaFigure(sweepDir: string): Scene {
  const summary = readJson(sweepDir, "kappa_sweep.json", ["kappas", "runs"]);
  const runs = summary.runs as { kappa: number; dir: string }[];
  if (!runs.length) throw new SchemaError("kappa_sweep.json has no runs");

  const scene = new Scene(780, 330);
  const panels: { title: string; ylabel: string; series: number[][]; ts: number[][] }[] = [
    { title: "planner cost", ylabel: "cost", series: [], ts: [] },
    { title: "object yaw", ylabel: "rad", series: [], ts: [] },
    { title: "input norm", ylabel: "|u|", series: [], ts: [] },
  ];
  for (const run of runs) {
    const dir = existsSync(run.dir) ? run.dir : join(sweepDir, `kappa_${Math.round(run.kappa)}`);
    const mpc = readTable(dir, "mpc.csv", MPC_COLUMNS);
    const states = readStates(dir);
    const yawCol = states.columns.includes("qo2") ? "qo2" : "qo0";
    panels[0].series.push(numbers(mpc, "cost"));
    panels[0].ts.push(numbers(mpc, "t"));
    panels[1].series.push(numbers(states, yawCol));
    panels[1].ts.push(numbers(states, "t"));
    panels[2].series.push(numbers(mpc, "u_norm"));
    panels[2].ts.push(numbers(mpc, "t"));
  }

  panels.forEach((p, pi) => {
    const allv = p.series.flat();
    const allt = p.ts.flat();
    const box: AxisBox = {
      x0: 60 + pi * 250,
      y0: 50,
      w: 190,
      h: 200,
      xmin: Math.min(...allt),
      xmax: Math.max(...allt) + 1e-9,
      ymin: Math.min(...allv),
      ymax: Math.max(...allv) + 1e-9,
    };
    drawAxes(scene, box, "time (s)", p.ylabel, p.title);
    p.series.forEach((vals, si) => {
      scene.line(
        p.ts[si].map((t, i) => [mapX(box, t), mapY(box, vals[i])] as [number, number]),
        PALETTE[si % PALETTE.length],
        1.3,
      );
    });
  });
  runs.forEach((run, si) => {
    scene.rect(60 + si * 150, 300, 14, 10, PALETTE[si % PALETTE.length]);
    scene.text(80 + si * 150, 309, `kappa = ${run.kappa}`, 11);
  });
  return scene;
}

// ----------------------------------------------------------------------
export function compareFigure(dir: string): Scene {
  const table = readTable(dir, "controller_compare.csv", COMPARE_COLUMNS);
  if (!table.rows.length) throw new SchemaError("controller_compare.csv has no rows");
  const metrics = ["avg_slippage", "avg_rotation_speed", "avg_joint_speed"];
  const labels = ["avg slippage", "rotation speed (rad/s)", "joint speed (rad/s)"];
  const methods = table.rows.map((r) => r[0]);

  const scene = new Scene(780, 320);
  metrics.forEach((mname, pi) => {
    const vals = numbers(table, mname);
    const box: AxisBox = {
      x0: 60 + pi * 250,
      y0: 50,
      w: 190,
      h: 190,
      xmin: 0,
      xmax: methods.length,
      ymin: Math.min(0, ...vals),
      ymax: Math.max(...vals) * 1.15 + 1e-12,
    };
    drawAxes(scene, box, "", labels[pi]);
    vals.forEach((v, vi) => {
      const x = mapX(box, vi + 0.2);
      const y = mapY(box, Math.max(v, 0));
      const y0 = mapY(box, 0);
      scene.rect(x, Math.min(y, y0), mapX(box, vi + 0.8) - x, Math.abs(y0 - y), PALETTE[vi % PALETTE.length], 0.85);
      scene.text(mapX(box, vi + 0.5), box.y0 + box.h + 14, methods[vi], 8.5, "middle");
    });
  });
  return scene;
}

// ----------------------------------------------------------------------
export function robustnessFigure(dir: string): Scene {
  const summary = readJson(dir, "robustness.json", ["magnitudes", "rows"]);
  const rows = summary.rows as { magnitude: number; mean_err: number; std_err: number; recovery_rate: number }[];
  if (!rows.length) throw new SchemaError("robustness.json has no rows");

  const scene = new Scene(640, 330);
  const mags = rows.map((r) => r.magnitude);
  const mean = rows.map((r) => r.mean_err);
  const std = rows.map((r) => r.std_err);
  const box: AxisBox = {
    x0: 70,
    y0: 50,
    w: 330,
    h: 220,
    xmin: Math.min(...mags),
    xmax: Math.max(...mags) + 1e-9,
    ymin: 0,
    ymax: Math.max(...mean.map((m, i) => m + std[i])) * 1.15 + 1e-9,
  };
  drawAxes(scene, box, "disturbance magnitude (rad)", "yaw tracking error (rad)", "recovery after impulse");
  // +/- half std band
  const upper = mags.map((m, i) => [mapX(box, m), mapY(box, mean[i] + 0.5 * std[i])] as [number, number]);
  const lower = mags.map((m, i) => [mapX(box, m), mapY(box, Math.max(mean[i] - 0.5 * std[i], 0))] as [number, number]);
  for (let i = 0; i + 1 < mags.length; i++) {
    // band as quads drawn with thick segments between consecutive points
    scene.line([upper[i], upper[i + 1], lower[i + 1], lower[i], upper[i]], "#aec7e8", 1);
  }
  for (let i = 0; i + 1 < mags.length; i++) {
    const steps = 8;
    for (let s = 0; s <= steps; s++) {
      const t = s / steps;
      const xa = upper[i][0] + (upper[i + 1][0] - upper[i][0]) * t;
      const ya = upper[i][1] + (upper[i + 1][1] - upper[i][1]) * t;
      const yb = lower[i][1] + (lower[i + 1][1] - lower[i][1]) * t;
      scene.line([[xa, ya], [xa, yb]], "#aec7e8", 2);
    }
  }
  scene.line(mags.map((m, i) => [mapX(box, m), mapY(box, mean[i])] as [number, number]), PALETTE[0], 2);

  const box2: AxisBox = { x0: 470, y0: 50, w: 130, h: 220, xmin: Math.min(...mags), xmax: Math.max(...mags) + 1e-9, ymin: 0, ymax: 1.05 };
  drawAxes(scene, box2, "magnitude", "recovery rate");
  scene.line(mags.map((m, i) => [mapX(box2, m), mapY(box2, rows[i].recovery_rate)] as [number, number]), PALETTE[2], 2);
  return scene;
}

export function buildFigure(kind: FigureKind, dir: string): Scene {
  switch (kind) {
    case "gait":
      return gaitFigure(dir);
    case "kappa_sweep":
      return kappaFigure(dir);
    case "controller_compare":
      return compareFigure(dir);
    case "robustness":
      return robustnessFigure(dir);
  }
}
