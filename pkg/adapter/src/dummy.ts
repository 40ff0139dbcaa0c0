// Dummy threshold model: the patch's probability channel thresholded at t,
// intersected with an 8-connected flood fill from each prompt point. On
// fixtures whose probability raster is high exactly on the target class
// this reproduces a perfect component oracle, which is what makes it
// useful for byte-level protocol conformance testing.

import { PredictRequest, PredictResult, RequestInvalid } from "./codec.js";
import { Raster, loadRaster } from "./pnm.js";

export interface Model {
  predict(request: PredictRequest): PredictResult;
}

export function parseModelSpec(spec: string): Model {
  const prefix = "dummy-threshold:";
  if (spec.startsWith(prefix)) {
    const t = Number(spec.slice(prefix.length));
    if (!Number.isFinite(t)) throw new Error(`bad threshold in model spec '${spec}'`);
    return new DummyThresholdModel(t);
  }
  throw new Error(`unknown model spec '${spec}' (expected dummy-threshold:<t>)`);
}

export class DummyThresholdModel implements Model {
  // Compare in float32 like the pipeline does, so "exactly equal to the
  // threshold" behaves identically on both sides of the wire.
  private readonly threshold: number;
  private cache = new Map<string, Raster>();

  constructor(threshold: number) {
    this.threshold = Math.fround(threshold);
  }

  private raster(path: string): Raster {
    let r = this.cache.get(path);
    if (!r) {
      r = loadRaster(path);
      this.cache.set(path, r);
    }
    return r;
  }

  private patchValues(request: PredictRequest): Float64Array {
    const { width, height, windowX0, windowY0, patch } = request;
    const out = new Float64Array(width * height); // zero = background
    if (patch.kind === "none") {
      throw new RequestInvalid("dummy-threshold needs a file or inline patch");
    }
    if (patch.kind === "inline") {
      const n = width * height;
      if (patch.format === "raw-f32") {
        if (patch.data.length !== n * 4) {
          throw new RequestInvalid(`inline patch is ${patch.data.length} bytes, expected ${n * 4}`);
        }
        const view = new DataView(patch.data.buffer, patch.data.byteOffset, n * 4);
        for (let i = 0; i < n; i++) out[i] = view.getFloat32(i * 4, true);
      } else {
        if (patch.data.length !== n) {
          throw new RequestInvalid(`inline patch is ${patch.data.length} bytes, expected ${n}`);
        }
        for (let i = 0; i < n; i++) out[i] = patch.data[i];
      }
      return out;
    }
    // File patch: crop the window; overhang beyond the raster stays zero.
    const raster = this.raster(patch.path);
    const x0 = Math.max(windowX0, 0);
    const y0 = Math.max(windowY0, 0);
    const x1 = Math.min(windowX0 + width, raster.width);
    const y1 = Math.min(windowY0 + height, raster.height);
    for (let y = y0; y < y1; y++) {
      for (let x = x0; x < x1; x++) {
        out[(y - windowY0) * width + (x - windowX0)] = raster.values[y * raster.width + x];
      }
    }
    return out;
  }

  predict(request: PredictRequest): PredictResult {
    const { id, width, height, points } = request;
    const values = this.patchValues(request);
    const above = new Uint8Array(width * height);
    for (let i = 0; i < above.length; i++) {
      if (values[i] > this.threshold) above[i] = 1;
    }
    const mask = new Uint8Array(width * height);
    let hit = false;
    for (const [px, py] of points) {
      if (!above[py * width + px] || mask[py * width + px]) continue;
      hit = true;
      floodFill8(above, mask, width, height, px, py);
    }
    return { id, width, height, mask, score: hit ? 1.0 : 0.0 };
  }
}

function floodFill8(
  grid: Uint8Array,
  out: Uint8Array,
  width: number,
  height: number,
  startX: number,
  startY: number,
): void {
  const stack = [startY * width + startX];
  out[stack[0]] = 1;
  while (stack.length) {
    const idx = stack.pop()!;
    const y = Math.floor(idx / width);
    const x = idx - y * width;
    for (let dy = -1; dy <= 1; dy++) {
      for (let dx = -1; dx <= 1; dx++) {
        if (dx === 0 && dy === 0) continue;
        const nx = x + dx;
        const ny = y + dy;
        if (nx < 0 || nx >= width || ny < 0 || ny >= height) continue;
        const nidx = ny * width + nx;
        if (grid[nidx] && !out[nidx]) {
          out[nidx] = 1;
          stack.push(nidx);
        }
      }
    }
  }
}
