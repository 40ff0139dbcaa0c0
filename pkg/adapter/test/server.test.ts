import { PassThrough } from "node:stream";

import { describe, expect, it } from "vitest";

import { decodeFrame, encodeFrame, encodePayload, unpackMask } from "../src/codec.js";
import { DummyThresholdModel } from "../src/dummy.js";
import { serveStream } from "../src/server.js";

function collectFrames(stream: PassThrough): () => Record<string, unknown>[] {
  let buffered = "";
  stream.on("data", (chunk) => {
    buffered += chunk.toString("utf8");
  });
  return () =>
    buffered
      .split("\n")
      .filter((line) => line.trim())
      .map((line) => decodeFrame(line));
}

function inlinePatch(values: number[]) {
  const buf = Buffer.alloc(values.length * 4);
  values.forEach((v, i) => buf.writeFloatLE(v, i * 4));
  return { kind: "inline", format: "raw-f32", ...encodePayload(new Uint8Array(buf)) };
}

function harness() {
  const input = new PassThrough();
  const output = new PassThrough();
  const done = serveStream(new DummyThresholdModel(0.8), input, output);
  return { input, output, frames: collectFrames(output), done };
}

const wait = () => new Promise((r) => setImmediate(r));

describe("serve loop", () => {
  it("speaks the handshake first", async () => {
    const { input, frames, done } = harness();
    await wait();
    expect(frames()[0]).toMatchObject({
      type: "handshake",
      protocol: "slideprompt-predictor",
      version: 1,
      nondeterministic: false,
    });
    input.end();
    await done;
  });

  it("answers predict frames with checksummed masks", async () => {
    const { input, frames, done } = harness();
    input.write(
      encodeFrame({
        type: "predict",
        id: 5,
        width: 2,
        height: 1,
        window: [0, 0],
        points: [[0, 0]],
        multimask: false,
        patch: inlinePatch([0.9, 0.1]),
      }),
    );
    input.end();
    await done;
    const result = frames()[1];
    expect(result).toMatchObject({ type: "result", id: 5, width: 2, height: 1, score: 1 });
    const packed = new Uint8Array(Buffer.from((result.mask as any).data, "base64"));
    expect(Array.from(unpackMask(packed, 2, 1))).toEqual([1, 0]);
  });

  it("malformed frames get a protocol error and the stream closes", async () => {
    const { input, frames, done } = harness();
    input.write("garbage that is not json\n");
    input.write(encodeFrame({ type: "predict" }));
    await done;
    await wait();
    const all = frames();
    expect(all[1]).toMatchObject({ type: "error", code: "protocol" });
    expect(all).toHaveLength(2); // nothing after the error
  });

  it("validation errors keep the connection alive", async () => {
    const { input, frames, done } = harness();
    input.write(
      encodeFrame({
        type: "predict",
        id: 9,
        width: 2,
        height: 1,
        window: [0, 0],
        points: [], // invalid
        multimask: false,
        patch: inlinePatch([0.9, 0.1]),
      }),
    );
    input.write(
      encodeFrame({
        type: "predict",
        id: 10,
        width: 2,
        height: 1,
        window: [0, 0],
        points: [[0, 0]],
        multimask: false,
        patch: inlinePatch([0.9, 0.1]),
      }),
    );
    input.end();
    await done;
    const all = frames();
    expect(all[1]).toMatchObject({ type: "error", code: "validation", id: 9 });
    expect(all[2]).toMatchObject({ type: "result", id: 10 });
  });

  it("shutdown frames end the loop cleanly", async () => {
    const { input, frames, done } = harness();
    input.write(encodeFrame({ type: "shutdown" }));
    await done;
    await wait();
    expect(frames()).toHaveLength(1); // just the handshake
  });

  it("advertise-version override is honored", async () => {
    const input = new PassThrough();
    const output = new PassThrough();
    const frames = collectFrames(output);
    const done = serveStream(new DummyThresholdModel(0.8), input, output, {
      advertiseVersion: 2,
    });
    await wait();
    expect(frames()[0]).toMatchObject({ type: "handshake", version: 2 });
    input.end();
    await done;
  });
});
