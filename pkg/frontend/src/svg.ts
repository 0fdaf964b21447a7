/**
 * Deterministic plot scene: a tiny retained-mode model rendered to SVG text
 * and to a raw pixel raster. No timestamps, no randomness, fixed number
 * formatting, so re-rendering identical inputs yields identical bytes.
 */

export interface Rect {
  kind: "rect";
  x: number;
  y: number;
  w: number;
  h: number;
  fill: string;
  opacity?: number;
}
export interface Line {
  kind: "line";
  pts: [number, number][];
  stroke: string;
  width: number;
  dash?: string;
}
export interface Text {
  kind: "text";
  x: number;
  y: number;
  s: string;
  size: number;
  anchor?: "start" | "middle" | "end";
  fill?: string;
}
export type Shape = Rect | Line | Text;

export class Scene {
  shapes: Shape[] = [];
  constructor(public width: number, public height: number) {}

  rect(x: number, y: number, w: number, h: number, fill: string, opacity?: number) {
    this.shapes.push({ kind: "rect", x, y, w, h, fill, opacity });
  }
  line(pts: [number, number][], stroke: string, width = 1.2, dash?: string) {
    this.shapes.push({ kind: "line", pts, stroke, width, dash });
  }
  text(x: number, y: number, s: string, size = 11, anchor: Text["anchor"] = "start", fill = "#222") {
    this.shapes.push({ kind: "text", x, y, s, size, anchor, fill });
  }
}

const f = (v: number) => (Number.isInteger(v) ? String(v) : v.toFixed(2));

export function toSvg(scene: Scene): string {
  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${scene.width}" height="${scene.height}" ` +
      `viewBox="0 0 ${scene.width} ${scene.height}" font-family="Helvetica,Arial,sans-serif">`,
  );
  parts.push(`<rect x="0" y="0" width="${scene.width}" height="${scene.height}" fill="#ffffff"/>`);
  for (const s of scene.shapes) {
    if (s.kind === "rect") {
      const op = s.opacity !== undefined ? ` fill-opacity="${f(s.opacity)}"` : "";
      parts.push(`<rect x="${f(s.x)}" y="${f(s.y)}" width="${f(s.w)}" height="${f(s.h)}" fill="${s.fill}"${op}/>`);
    } else if (s.kind === "line") {
      const d = s.pts.map(([x, y], i) => `${i === 0 ? "M" : "L"}${f(x)} ${f(y)}`).join(" ");
      const dash = s.dash ? ` stroke-dasharray="${s.dash}"` : "";
      parts.push(`<path d="${d}" fill="none" stroke="${s.stroke}" stroke-width="${f(s.width)}"${dash}/>`);
    } else {
      const esc = s.s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
      parts.push(
        `<text x="${f(s.x)}" y="${f(s.y)}" font-size="${f(s.size)}" text-anchor="${s.anchor}" fill="${s.fill}">${esc}</text>`,
      );
    }
  }
  parts.push("</svg>");
  return parts.join("\n") + "\n";
}

// ---------------------------------------------------------------------
// axes helpers
// ---------------------------------------------------------------------
export interface AxisBox {
  x0: number;
  y0: number;
  w: number;
  h: number;
  xmin: number;
  xmax: number;
  ymin: number;
  ymax: number;
}

export function mapX(b: AxisBox, v: number): number {
  return b.x0 + ((v - b.xmin) / (b.xmax - b.xmin || 1)) * b.w;
}
export function mapY(b: AxisBox, v: number): number {
  return b.y0 + b.h - ((v - b.ymin) / (b.ymax - b.ymin || 1)) * b.h;
}

export function niceTicks(lo: number, hi: number, n = 5): number[] {
  if (!(hi > lo)) return [lo];
  const span = hi - lo;
  const step0 = span / n;
  const mag = Math.pow(10, Math.floor(Math.log10(step0)));
  let step = mag;
  for (const m of [1, 2, 5, 10]) {
    if (step0 <= m * mag) {
      step = m * mag;
      break;
    }
  }
  const ticks: number[] = [];
  for (let v = Math.ceil(lo / step) * step; v <= hi + 1e-12; v += step) {
    ticks.push(Math.abs(v) < step * 1e-9 ? 0 : v);
  }
  return ticks;
}

export function fmtTick(v: number): string {
  if (v === 0) return "0";
  const a = Math.abs(v);
  if (a >= 1000 || a < 0.01) return v.toExponential(1);
  return String(Math.round(v * 1000) / 1000);
}

export function drawAxes(scene: Scene, b: AxisBox, xlabel: string, ylabel: string, title?: string) {
  scene.line(
    [
      [b.x0, b.y0],
      [b.x0, b.y0 + b.h],
      [b.x0 + b.w, b.y0 + b.h],
    ],
    "#444",
    1,
  );
  for (const t of niceTicks(b.xmin, b.xmax)) {
    const x = mapX(b, t);
    scene.line(
      [
        [x, b.y0 + b.h],
        [x, b.y0 + b.h + 4],
      ],
      "#444",
      1,
    );
    scene.text(x, b.y0 + b.h + 16, fmtTick(t), 10, "middle", "#444");
  }
  for (const t of niceTicks(b.ymin, b.ymax)) {
    const y = mapY(b, t);
    scene.line(
      [
        [b.x0 - 4, y],
        [b.x0, y],
      ],
      "#444",
      1,
    );
    scene.text(b.x0 - 7, y + 3, fmtTick(t), 10, "end", "#444");
    scene.line(
      [
        [b.x0, y],
        [b.x0 + b.w, y],
      ],
      "#eeeeee",
      0.6,
    );
  }
  scene.text(b.x0 + b.w / 2, b.y0 + b.h + 32, xlabel, 11, "middle");
  scene.text(b.x0 - 38, b.y0 - 8, ylabel, 11, "start");
  if (title) scene.text(b.x0 + b.w / 2, b.y0 - 8, title, 12, "middle");
}

export const PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];
