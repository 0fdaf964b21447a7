import { mkdtempSync, writeFileSync, mkdirSync, readFileSync, existsSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import { buildFigure } from "../src/figures.js";
import { SchemaError } from "../src/schema.js";
import { toSvg } from "../src/svg.js";
import { toPng } from "../src/png.js";
import { parseCsv } from "../src/csv.js";
import { main } from "../src/cli.js";

const STATE_COLS = ["t", "qr0", "qo0", "qdr0", "qdo0", "yaw_ref"];

function writeRun(dir: string, steps = 20): void {
  mkdirSync(dir, { recursive: true });
  const manifest = {
    schema_version: 1,
    config: { name: "fixture" },
    config_hash: "abc123",
    seed: 0,
    counters: {},
    state_columns: STATE_COLS,
    controller_columns: ["t"],
  };
  writeFileSync(join(dir, "manifest.json"), JSON.stringify(manifest));
  let states = STATE_COLS.join(",") + "\n";
  let contacts = "t,pair,phi,slip_sq,fm_x,fm_y,fm_z,fr_x,fr_y,fr_z\n";
  let mpc = "t,iters,cost,converged,u_norm\n";
  for (let i = 0; i < steps; i++) {
    const t = i * 0.1;
    states += `${t},${0.01 * i},${0.03 * i},0.1,0.3,${0.03 * i}\n`;
    const phi = i % 5 < 3 ? 0.001 : 0.01; // alternating contact episodes
    contacts += `${t},tip0|disk,${phi},0.0001,0,0,1,0,0,1\n`;
    contacts += `${t},tip1|disk,${i % 5 < 2 ? 0.002 : 0.02},0.0002,0,0,1,0,0,1\n`;
    mpc += `${t},3,${10 - 0.1 * i},1,0.04\n`;
  }
  writeFileSync(join(dir, "states.csv"), states);
  writeFileSync(join(dir, "contacts.csv"), contacts);
  writeFileSync(join(dir, "mpc.csv"), mpc);
  writeFileSync(join(dir, "controller.csv"), "t\n");
  writeFileSync(join(dir, "timings.json"), "{}");
}

function tmp(): string {
  return mkdtempSync(join(tmpdir(), "plots-"));
}

describe("figure builders", () => {
  it("renders a gait timeline with one lane per pair", () => {
    const dir = tmp();
    writeRun(dir);
    const svg = toSvg(buildFigure("gait", dir));
    expect(svg).toContain("tip0|disk");
    expect(svg).toContain("tip1|disk");
    expect(svg).toContain("<rect"); // shaded intervals
  });

  it("renders kappa sweep panels from the batch summary", () => {
    const root = tmp();
    for (const k of [100, 1000]) writeRun(join(root, `kappa_${k}`));
    writeFileSync(
      join(root, "kappa_sweep.json"),
      JSON.stringify({
        kappas: [100, 1000],
        runs: [
          { kappa: 100, dir: join(root, "kappa_100"), rotation_speed: 0.2 },
          { kappa: 1000, dir: join(root, "kappa_1000"), rotation_speed: 0.1 },
        ],
      }),
    );
    const svg = toSvg(buildFigure("kappa_sweep", root));
    expect(svg).toContain("planner cost");
    expect(svg).toContain("object yaw");
    expect(svg).toContain("input norm");
    expect(svg).toContain("kappa = 100");
  });

  it("renders controller comparison bars", () => {
    const dir = tmp();
    writeFileSync(
      join(dir, "controller_compare.csv"),
      "method,avg_slippage,avg_rotation_speed,avg_joint_speed\n" +
        "ours,0.001,0.3,0.9\nopen_loop,0.008,0.05,0.8\n",
    );
    const svg = toSvg(buildFigure("controller_compare", dir));
    expect(svg).toContain("ours");
    expect(svg).toContain("open_loop");
  });

  it("renders robustness bands", () => {
    const dir = tmp();
    writeFileSync(
      join(dir, "robustness.json"),
      JSON.stringify({
        magnitudes: [0.1, 0.2, 0.4],
        n_seeds: 5,
        rows: [
          { magnitude: 0.1, mean_err: 0.02, std_err: 0.01, recovery_rate: 1.0 },
          { magnitude: 0.2, mean_err: 0.05, std_err: 0.02, recovery_rate: 0.8 },
          { magnitude: 0.4, mean_err: 0.2, std_err: 0.05, recovery_rate: 0.4 },
        ],
      }),
    );
    const svg = toSvg(buildFigure("robustness", dir));
    expect(svg).toContain("recovery after impulse");
  });
});

describe("schema validation", () => {
  it("rejects a missing run directory without partial output", () => {
    expect(() => buildFigure("gait", join(tmpdir(), "nope-xyz"))).toThrow(SchemaError);
  });

  it("lists offending columns", () => {
    const dir = tmp();
    writeRun(dir);
    writeFileSync(join(dir, "contacts.csv"), "t,pair\n0,tip0|disk\n");
    try {
      buildFigure("gait", dir);
      expect.unreachable();
    } catch (e) {
      expect(e).toBeInstanceOf(SchemaError);
      expect((e as SchemaError).message).toContain("phi");
      expect((e as SchemaError).offenders).toContain("slip_sq");
    }
  });

  it("rejects wrong schema_version", () => {
    const dir = tmp();
    writeRun(dir);
    const m = JSON.parse(readFileSync(join(dir, "manifest.json"), "utf8"));
    m.schema_version = 99;
    writeFileSync(join(dir, "manifest.json"), JSON.stringify(m));
    expect(() => buildFigure("gait", dir)).toThrow(/schema_version/);
  });
});

describe("determinism", () => {
  it("re-rendering produces byte-identical SVG", () => {
    const dir = tmp();
    writeRun(dir);
    const a = toSvg(buildFigure("gait", dir));
    const b = toSvg(buildFigure("gait", dir));
    expect(a).toEqual(b);
  });

  it("PNG encoding is well-formed and deterministic", () => {
    const dir = tmp();
    writeRun(dir);
    const a = toPng(buildFigure("gait", dir));
    const b = toPng(buildFigure("gait", dir));
    expect(Buffer.from(a).equals(Buffer.from(b))).toBe(true);
    // PNG signature
    expect([...a.slice(0, 4)]).toEqual([137, 80, 78, 71]);
  });
});

describe("cli", () => {
  it("writes svg and png on success", () => {
    const dir = tmp();
    writeRun(dir);
    const out = join(dir, "fig.svg");
    const code = main(["node", "cli", "gait", dir, "-o", out]);
    expect(code).toBe(0);
    expect(existsSync(out)).toBe(true);
    expect(existsSync(join(dir, "fig.png"))).toBe(true);
  });

  it("exits 2 on schema failure and writes nothing", () => {
    const dir = tmp();
    const out = join(dir, "fig.svg");
    const code = main(["node", "cli", "gait", dir, "-o", out]);
    expect(code).toBe(2);
    expect(existsSync(out)).toBe(false);
  });

  it("exits 2 on unknown kind", () => {
    expect(main(["node", "cli", "sparkline", "."])).toBe(2);
  });
});

describe("csv parser", () => {
  it("handles quoted fields and CRLF", () => {
    const t = parseCsv('a,b\r\n"x,1",2\r\n');
    expect(t.columns).toEqual(["a", "b"]);
    expect(t.rows[0]).toEqual(["x,1", "2"]);
  });
});
