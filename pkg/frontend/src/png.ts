/**
 * Raster companion output: render scene geometry (rects and polylines;
 * text is vector-only) into an RGBA buffer and encode a PNG with
 * node:zlib. Good enough for thumbnails next to the authoritative SVG.
 */

import { deflateSync } from "node:zlib";
import { Scene } from "./svg.js";

function crc32(buf: Uint8Array): number {
  let c: number;
  const table: number[] = [];
  for (let n = 0; n < 256; n++) {
    c = n;
    for (let k = 0; k < 8; k++) c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    table[n] = c >>> 0;
  }
  let crc = 0xffffffff;
  for (let i = 0; i < buf.length; i++) crc = table[(crc ^ buf[i]) & 0xff] ^ (crc >>> 8);
  return (crc ^ 0xffffffff) >>> 0;
}

function chunk(type: string, data: Uint8Array): Uint8Array {
  const out = new Uint8Array(12 + data.length);
  const dv = new DataView(out.buffer);
  dv.setUint32(0, data.length);
  for (let i = 0; i < 4; i++) out[4 + i] = type.charCodeAt(i);
  out.set(data, 8);
  const body = out.subarray(4, 8 + data.length);
  dv.setUint32(8 + data.length, crc32(body));
  return out;
}

function parseColor(c: string): [number, number, number] {
  if (c.startsWith("#")) {
    const hex = c.slice(1);
    const v = parseInt(hex.length === 3 ? hex.split("").map((h) => h + h).join("") : hex, 16);
    return [(v >> 16) & 255, (v >> 8) & 255, v & 255];
  }
  return [120, 120, 120];
}

class Raster {
  data: Uint8Array;
  constructor(public w: number, public h: number) {
    this.data = new Uint8Array(w * h * 4).fill(255);
  }
  blend(x: number, y: number, rgb: [number, number, number], a: number) {
    if (x < 0 || y < 0 || x >= this.w || y >= this.h) return;
    const i = (y * this.w + x) * 4;
    for (let k = 0; k < 3; k++) {
      this.data[i + k] = Math.round(rgb[k] * a + this.data[i + k] * (1 - a));
    }
  }
  fillRect(x0: number, y0: number, w: number, h: number, rgb: [number, number, number], a: number) {
    for (let y = Math.max(0, Math.floor(y0)); y < Math.min(this.h, y0 + h); y++) {
      for (let x = Math.max(0, Math.floor(x0)); x < Math.min(this.w, x0 + w); x++) {
        this.blend(x, y, rgb, a);
      }
    }
  }
  line(x0: number, y0: number, x1: number, y1: number, rgb: [number, number, number], width: number) {
    const steps = Math.max(Math.abs(x1 - x0), Math.abs(y1 - y0), 1) * 2;
    const r = Math.max(0.5, width / 2);
    for (let s = 0; s <= steps; s++) {
      const t = s / steps;
      const cx = x0 + (x1 - x0) * t;
      const cy = y0 + (y1 - y0) * t;
      for (let dy = -Math.ceil(r); dy <= Math.ceil(r); dy++) {
        for (let dx = -Math.ceil(r); dx <= Math.ceil(r); dx++) {
          if (dx * dx + dy * dy <= r * r + 0.25) {
            this.blend(Math.round(cx + dx), Math.round(cy + dy), rgb, 1.0);
          }
        }
      }
    }
  }
}

export function toPng(scene: Scene): Uint8Array {
  const img = new Raster(scene.width, scene.height);
  for (const s of scene.shapes) {
    if (s.kind === "rect") {
      img.fillRect(s.x, s.y, s.w, s.h, parseColor(s.fill), s.opacity ?? 1.0);
    } else if (s.kind === "line") {
      for (let i = 0; i + 1 < s.pts.length; i++) {
        img.line(s.pts[i][0], s.pts[i][1], s.pts[i + 1][0], s.pts[i + 1][1], parseColor(s.stroke), s.width);
      }
    }
    // text stays vector-only
  }
  // encode: filter byte 0 per scanline
  const raw = new Uint8Array(img.h * (img.w * 4 + 1));
  for (let y = 0; y < img.h; y++) {
    raw[y * (img.w * 4 + 1)] = 0;
    raw.set(img.data.subarray(y * img.w * 4, (y + 1) * img.w * 4), y * (img.w * 4 + 1) + 1);
  }
  const ihdr = new Uint8Array(13);
  const dv = new DataView(ihdr.buffer);
  dv.setUint32(0, img.w);
  dv.setUint32(4, img.h);
  ihdr[8] = 8; // bit depth
  ihdr[9] = 6; // RGBA
  const sig = Uint8Array.from([137, 80, 78, 71, 13, 10, 26, 10]);
  const idat = deflateSync(raw, { level: 9 });
  const parts = [sig, chunk("IHDR", ihdr), chunk("IDAT", new Uint8Array(idat)), chunk("IEND", new Uint8Array(0))];
  const total = parts.reduce((n, p) => n + p.length, 0);
  const out = new Uint8Array(total);
  let off = 0;
  for (const p of parts) {
    out.set(p, off);
    off += p.length;
  }
  return out;
}
