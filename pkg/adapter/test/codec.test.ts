import { describe, expect, it } from "vitest";

import {
  ProtocolViolation,
  RequestInvalid,
  decodeFrame,
  encodeFrame,
  encodePayload,
  handshakeFrame,
  packMask,
  parseRequest,
  resultFrame,
  unpackMask,
} from "../src/codec.js";
import { crc32 } from "../src/crc32.js";

describe("crc32", () => {
  it("matches the standard test vector", () => {
    // CRC-32/ISO-HDLC("123456789") = 0xCBF43926
    expect(crc32(new TextEncoder().encode("123456789"))).toBe(0xcbf43926);
  });

  it("empty input is zero", () => {
    expect(crc32(new Uint8Array(0))).toBe(0);
  });
});

describe("mask packing", () => {
  it("is MSB-first row-major with zero padding", () => {
    const mask = new Uint8Array(12);
    mask[0] = 1;
    mask[9] = 1;
    const packed = packMask(mask);
    expect(Array.from(packed)).toEqual([0x80, 0x40]);
  });

  it("round-trips random masks", () => {
    for (let trial = 0; trial < 20; trial++) {
      const w = 1 + Math.floor(Math.random() * 40);
      const h = 1 + Math.floor(Math.random() * 40);
      const mask = new Uint8Array(w * h).map(() => (Math.random() < 0.5 ? 1 : 0));
      expect(unpackMask(packMask(mask), w, h)).toEqual(mask);
    }
  });

  it("rejects wrong payload lengths", () => {
    expect(() => unpackMask(new Uint8Array(1), 40, 40)).toThrow(ProtocolViolation);
  });
});

function requestFrame(overrides: Record<string, unknown> = {}) {
  return {
    type: "predict",
    id: 1,
    width: 8,
    height: 8,
    window: [100, 200],
    points: [[3, 4]],
    multimask: false,
    patch: { kind: "none" },
    ...overrides,
  };
}

describe("request parsing", () => {
  it("accepts a well-formed frame", () => {
    const req = parseRequest(decodeFrame(encodeFrame(requestFrame())));
    expect(req.id).toBe(1);
    expect(req.windowX0).toBe(100);
    expect(req.points).toEqual([[3, 4]]);
  });

  it("rejects out-of-patch points as validation errors", () => {
    expect(() => parseRequest(requestFrame({ points: [[8, 0]] }))).toThrow(RequestInvalid);
    expect(() => parseRequest(requestFrame({ points: [] }))).toThrow(RequestInvalid);
    expect(() => parseRequest(requestFrame({ multimask: true }))).toThrow(RequestInvalid);
  });

  it("rejects malformed structure as protocol violations", () => {
    expect(() => parseRequest(requestFrame({ window: [1] }))).toThrow(ProtocolViolation);
    expect(() => parseRequest(requestFrame({ points: [["a", 1]] }))).toThrow(ProtocolViolation);
    expect(() => parseRequest(requestFrame({ id: 1.5 }))).toThrow(ProtocolViolation);
    expect(() => decodeFrame("not json")).toThrow(ProtocolViolation);
    expect(() => decodeFrame("[1,2]")).toThrow(ProtocolViolation);
  });

  it("verifies inline patch checksums", () => {
    const payload = new Uint8Array([1, 2, 3, 4]);
    const good = requestFrame({
      width: 2,
      height: 2,
      points: [[0, 0]],
      patch: { kind: "inline", format: "raw-u8", ...encodePayload(payload) },
    });
    expect(parseRequest(good).patch).toMatchObject({ kind: "inline", format: "raw-u8" });
    const bad = requestFrame({
      width: 2,
      height: 2,
      points: [[0, 0]],
      patch: { kind: "inline", format: "raw-u8", ...encodePayload(payload), crc32: 1 },
    });
    expect(() => parseRequest(bad)).toThrow(ProtocolViolation);
  });
});

describe("result frames", () => {
  it("carry a checksummed packed mask", () => {
    const mask = new Uint8Array(16).map((_, i) => (i % 3 === 0 ? 1 : 0));
    const frame = resultFrame({ id: 7, width: 4, height: 4, mask, score: 1 });
    expect(frame.type).toBe("result");
    const packed = Buffer.from(frame.mask.data, "base64");
    expect(crc32(new Uint8Array(packed))).toBe(frame.mask.crc32);
    expect(unpackMask(new Uint8Array(packed), 4, 4)).toEqual(mask);
  });
});

describe("handshake", () => {
  it("advertises version 1 by default", () => {
    expect(handshakeFrame()).toMatchObject({
      type: "handshake",
      protocol: "slideprompt-predictor",
      version: 1,
      nondeterministic: false,
    });
  });

  it("can advertise other versions for mismatch testing", () => {
    expect(handshakeFrame(2).version).toBe(2);
  });
});
