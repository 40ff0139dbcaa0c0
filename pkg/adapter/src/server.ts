// Serve loop: handshake first, then one response per request line.
// Framing violations answer with a protocol error frame and close the
// stream; semantically invalid requests answer with a validation error
// and keep serving.

import type { Readable, Writable } from "node:stream";

import {
  MAX_FRAME_BYTES,
  ProtocolViolation,
  RequestInvalid,
  decodeFrame,
  encodeFrame,
  errorFrame,
  handshakeFrame,
  parseRequest,
  resultFrame,
} from "./codec.js";
import type { Model } from "./dummy.js";

export interface ServeOptions {
  advertiseVersion?: number; // test hook for handshake-mismatch clients
}

export function serveStream(
  model: Model,
  input: Readable,
  output: Writable,
  options: ServeOptions = {},
): Promise<void> {
  return new Promise((resolve) => {
    let buffer = "";
    let done = false;

    const write = (frame: unknown) => {
      output.write(encodeFrame(frame));
    };

    const finish = () => {
      if (!done) {
        done = true;
        input.removeAllListeners("data");
        resolve();
      }
    };

    const handleLine = (line: string): boolean => {
      let frame;
      try {
        frame = decodeFrame(line);
      } catch (e) {
        write(errorFrame("protocol", (e as Error).message));
        return false;
      }
      switch (frame["type"]) {
        case "shutdown":
          return false;
        case "predict":
          break;
        default:
          write(errorFrame("protocol", `unexpected frame type '${String(frame["type"])}'`));
          return false;
      }
      try {
        const request = parseRequest(frame);
        write(resultFrame(model.predict(request)));
      } catch (e) {
        if (e instanceof RequestInvalid) {
          const id = typeof frame["id"] === "number" ? (frame["id"] as number) : null;
          write(errorFrame("validation", e.message, id));
          return true;
        }
        if (e instanceof ProtocolViolation) {
          write(errorFrame("protocol", e.message));
          return false;
        }
        write(errorFrame("internal", (e as Error).message));
        return false;
      }
      return true;
    };

    write(handshakeFrame(options.advertiseVersion));

    input.on("data", (chunk: Buffer | string) => {
      if (done) return;
      buffer += chunk.toString("utf8");
      if (buffer.length > MAX_FRAME_BYTES) {
        write(errorFrame("protocol", "frame exceeds size limit"));
        finish();
        return;
      }
      let idx: number;
      while ((idx = buffer.indexOf("\n")) >= 0) {
        const line = buffer.slice(0, idx);
        buffer = buffer.slice(idx + 1);
        if (!line.trim()) continue;
        if (!handleLine(line)) {
          finish();
          return;
        }
      }
    });
    input.on("end", finish);
    input.on("error", finish);
  });
}
