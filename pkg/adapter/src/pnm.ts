// Readers for the two rasters that cross the protocol: binary PGM (P5,
// maxval 255) class masks and grayscale PFM probability maps (negative
// scale = little-endian, rows stored bottom-up).

import { readFileSync } from "node:fs";

export interface Raster {
  width: number;
  height: number;
  // Row-major, top-down. PGM values are bytes; PFM values are the exact
  // float32 contents (promoted to doubles without loss).
  values: Float64Array;
}

class HeaderScanner {
  private pos = 0;

  constructor(private buf: Buffer) {}

  nextToken(): string {
    let tok = "";
    while (this.pos < this.buf.length) {
      const c = this.buf[this.pos];
      if (c === 0x23 /* # */ && tok === "") {
        while (this.pos < this.buf.length && this.buf[this.pos] !== 0x0a) this.pos++;
        continue;
      }
      this.pos++;
      if (c === 0x20 || c === 0x09 || c === 0x0a || c === 0x0d || c === 0x0b || c === 0x0c) {
        if (tok !== "") return tok;
        continue;
      }
      tok += String.fromCharCode(c);
    }
    if (tok === "") throw new Error("unexpected end of header");
    return tok;
  }

  payload(): Buffer {
    return this.buf.subarray(this.pos);
  }
}

export function loadPgm(path: string): Raster {
  const scanner = new HeaderScanner(readFileSync(path));
  const magic = scanner.nextToken();
  if (magic !== "P5") throw new Error(`not a binary PGM (magic ${magic})`);
  const width = parseInt(scanner.nextToken(), 10);
  const height = parseInt(scanner.nextToken(), 10);
  const maxval = parseInt(scanner.nextToken(), 10);
  if (!(width > 0) || !(height > 0)) throw new Error("bad PGM dimensions");
  if (maxval !== 255) throw new Error(`unsupported maxval ${maxval}`);
  const payload = scanner.payload();
  if (payload.length < width * height) throw new Error("truncated PGM payload");
  const values = new Float64Array(width * height);
  for (let i = 0; i < values.length; i++) values[i] = payload[i];
  return { width, height, values };
}

export function loadPfm(path: string): Raster {
  const scanner = new HeaderScanner(readFileSync(path));
  const magic = scanner.nextToken();
  if (magic === "PF") throw new Error("color PFM not supported");
  if (magic !== "Pf") throw new Error(`not a PFM (magic ${magic})`);
  const width = parseInt(scanner.nextToken(), 10);
  const height = parseInt(scanner.nextToken(), 10);
  const scale = parseFloat(scanner.nextToken());
  if (!(width > 0) || !(height > 0)) throw new Error("bad PFM dimensions");
  if (!(scale !== 0) || Number.isNaN(scale)) throw new Error("bad PFM scale");
  const payload = scanner.payload();
  if (payload.length < width * height * 4) throw new Error("truncated PFM payload");
  const littleEndian = scale < 0;
  const view = new DataView(payload.buffer, payload.byteOffset, width * height * 4);
  const values = new Float64Array(width * height);
  // PFM stores the bottom row first; flip to top-down.
  for (let row = 0; row < height; row++) {
    const src = (height - 1 - row) * width;
    for (let col = 0; col < width; col++) {
      values[row * width + col] = view.getFloat32((src + col) * 4, littleEndian);
    }
  }
  return { width, height, values };
}

export function loadRaster(path: string): Raster {
  const head = readFileSync(path).subarray(0, 2).toString("latin1");
  if (head === "P5") return loadPgm(path);
  if (head === "Pf" || head === "PF") return loadPfm(path);
  throw new Error(`unrecognized raster format in ${path}`);
}
