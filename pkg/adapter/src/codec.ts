// Frame codec for the slideprompt predictor protocol (see docs/protocol.md
// at the repository root). One JSON object per newline-terminated line;
// binary payloads are base64 with a crc32 of the decoded bytes.

import { crc32 } from "./crc32.js";

export const PROTOCOL_NAME = "slideprompt-predictor";
export const PROTOCOL_VERSION = 1;
export const MAX_FRAME_BYTES = 1 << 28;

export class ProtocolViolation extends Error {}
export class RequestInvalid extends Error {}

export type PatchSource =
  | { kind: "none" }
  | { kind: "file"; path: string }
  | { kind: "inline"; format: "raw-f32" | "raw-u8"; data: Uint8Array };

export interface PredictRequest {
  id: number;
  width: number;
  height: number;
  windowX0: number;
  windowY0: number;
  points: Array<[number, number]>;
  patch: PatchSource;
}

export interface PredictResult {
  id: number;
  width: number;
  height: number;
  mask: Uint8Array; // one byte per pixel, 0/1, row-major
  score: number;
}

export function encodeFrame(frame: unknown): string {
  return JSON.stringify(frame) + "\n";
}

export function decodeFrame(line: string): Record<string, unknown> {
  let obj: unknown;
  try {
    obj = JSON.parse(line);
  } catch (e) {
    throw new ProtocolViolation(`unparseable frame: ${(e as Error).message}`);
  }
  if (typeof obj !== "object" || obj === null || Array.isArray(obj)) {
    throw new ProtocolViolation("frame is not an object");
  }
  const type = (obj as Record<string, unknown>)["type"];
  if (typeof type !== "string") {
    throw new ProtocolViolation("frame lacks a string 'type'");
  }
  return obj as Record<string, unknown>;
}

export function handshakeFrame(version: number = PROTOCOL_VERSION) {
  return {
    type: "handshake",
    protocol: PROTOCOL_NAME,
    version,
    nondeterministic: false,
  };
}

export function errorFrame(code: string, message: string, id: number | null = null) {
  return { type: "error", code, message, id };
}

function requireInt(obj: Record<string, unknown>, key: string): number {
  const v = obj[key];
  if (typeof v !== "number" || !Number.isInteger(v)) {
    throw new ProtocolViolation(`field '${key}' must be an integer`);
  }
  return v;
}

function decodePayload(obj: Record<string, unknown>): Uint8Array {
  const data = obj["data"];
  if (typeof data !== "string") {
    throw new ProtocolViolation("payload lacks base64 'data'");
  }
  let bytes: Buffer;
  try {
    bytes = Buffer.from(data, "base64");
  } catch {
    throw new ProtocolViolation("bad base64 payload");
  }
  // Buffer.from(.., base64) silently ignores junk; round-trip to detect it.
  if (bytes.toString("base64").replace(/=+$/, "") !== data.replace(/=+$/, "")) {
    throw new ProtocolViolation("bad base64 payload");
  }
  if (crc32(bytes) !== obj["crc32"]) {
    throw new ProtocolViolation("payload checksum mismatch");
  }
  return new Uint8Array(bytes);
}

export function encodePayload(payload: Uint8Array): { data: string; crc32: number } {
  return {
    data: Buffer.from(payload).toString("base64"),
    crc32: crc32(payload),
  };
}

function parsePatch(obj: unknown): PatchSource {
  if (typeof obj !== "object" || obj === null) {
    throw new ProtocolViolation("bad patch source");
  }
  const rec = obj as Record<string, unknown>;
  switch (rec["kind"]) {
    case "none":
      return { kind: "none" };
    case "file": {
      if (typeof rec["path"] !== "string") {
        throw new ProtocolViolation("file patch source needs a string path");
      }
      return { kind: "file", path: rec["path"] };
    }
    case "inline": {
      const format = rec["format"];
      if (format !== "raw-f32" && format !== "raw-u8") {
        throw new ProtocolViolation(`unknown inline format ${String(format)}`);
      }
      return { kind: "inline", format, data: decodePayload(rec) };
    }
    default:
      throw new ProtocolViolation(`unknown patch source kind ${String(rec["kind"])}`);
  }
}

export function parseRequest(frame: Record<string, unknown>): PredictRequest {
  if (frame["type"] !== "predict") {
    throw new ProtocolViolation(`not a predict frame: ${String(frame["type"])}`);
  }
  const id = requireInt(frame, "id");
  const width = requireInt(frame, "width");
  const height = requireInt(frame, "height");
  const window = frame["window"];
  if (
    !Array.isArray(window) ||
    window.length !== 2 ||
    !window.every((v) => typeof v === "number" && Number.isInteger(v))
  ) {
    throw new ProtocolViolation("bad window");
  }
  const rawPoints = frame["points"];
  if (
    !Array.isArray(rawPoints) ||
    !rawPoints.every(
      (p) =>
        Array.isArray(p) &&
        p.length === 2 &&
        p.every((v) => typeof v === "number" && Number.isInteger(v)),
    )
  ) {
    throw new ProtocolViolation("bad points");
  }
  const patch = parsePatch(frame["patch"] ?? { kind: "none" });
  // Semantics (not framing): these answer with a validation error frame.
  if (width <= 0 || height <= 0) {
    throw new RequestInvalid(`bad patch dims ${width}x${height}`);
  }
  const points = rawPoints.map((p) => [p[0], p[1]] as [number, number]);
  if (points.length === 0) {
    throw new RequestInvalid("a predict request needs at least one point");
  }
  for (const [x, y] of points) {
    if (x < 0 || x >= width || y < 0 || y >= height) {
      throw new RequestInvalid(`point (${x}, ${y}) outside patch ${width}x${height}`);
    }
  }
  if (frame["multimask"] === true) {
    throw new RequestInvalid("multimask output is not supported");
  }
  return {
    id,
    width,
    height,
    windowX0: window[0] as number,
    windowY0: window[1] as number,
    points,
    patch,
  };
}

// Row-major pixels packed MSB-first, final byte zero-padded.
export function packMask(mask: Uint8Array): Uint8Array {
  const out = new Uint8Array((mask.length + 7) >> 3);
  for (let i = 0; i < mask.length; i++) {
    if (mask[i]) out[i >> 3] |= 0x80 >> (i & 7);
  }
  return out;
}

export function unpackMask(payload: Uint8Array, width: number, height: number): Uint8Array {
  const n = width * height;
  if (payload.length !== (n + 7) >> 3) {
    throw new ProtocolViolation(`packed mask is ${payload.length} bytes for ${width}x${height}`);
  }
  const out = new Uint8Array(n);
  for (let i = 0; i < n; i++) {
    out[i] = (payload[i >> 3] >> (7 - (i & 7))) & 1;
  }
  return out;
}

export function resultFrame(result: PredictResult) {
  return {
    type: "result",
    id: result.id,
    width: result.width,
    height: result.height,
    mask: encodePayload(packMask(result.mask)),
    score: result.score,
  };
}
