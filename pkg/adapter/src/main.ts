// Entry point: host the dummy model over stdio (default) or TCP.
//
//   node dist/main.js --model dummy-threshold:0.8 [--transport stdio]
//   node dist/main.js --model dummy-threshold:0.8 --transport tcp --port 9000
//
// --advertise-version <n> makes the handshake claim a different protocol
// version; it exists so clients' version-mismatch rejection can be tested
// against a real endpoint.

import net from "node:net";
import process from "node:process";

import { encodeFrame, errorFrame } from "./codec.js";
import { Model, parseModelSpec } from "./dummy.js";
import { serveStream } from "./server.js";

interface Args {
  model: string;
  transport: "stdio" | "tcp";
  host: string;
  port: number;
  advertiseVersion?: number;
}

function parseArgs(argv: string[]): Args {
  const args: Args = { model: "", transport: "stdio", host: "127.0.0.1", port: 0 };
  for (let i = 0; i < argv.length; i++) {
    const flag = argv[i];
    const next = () => {
      const v = argv[++i];
      if (v === undefined) throw new Error(`missing value for ${flag}`);
      return v;
    };
    switch (flag) {
      case "--model":
        args.model = next();
        break;
      case "--transport": {
        const t = next();
        if (t !== "stdio" && t !== "tcp") throw new Error(`unknown transport '${t}'`);
        args.transport = t;
        break;
      }
      case "--host":
        args.host = next();
        break;
      case "--port":
        args.port = parseInt(next(), 10);
        break;
      case "--advertise-version":
        args.advertiseVersion = parseInt(next(), 10);
        break;
      default:
        throw new Error(`unknown flag '${flag}'`);
    }
  }
  if (!args.model) throw new Error("--model is required");
  return args;
}

async function main(): Promise<number> {
  let args: Args;
  try {
    args = parseArgs(process.argv.slice(2));
  } catch (e) {
    process.stderr.write(`usage error: ${(e as Error).message}\n`);
    return 2;
  }

  let model: Model;
  try {
    model = parseModelSpec(args.model);
  } catch (e) {
    // Model load failures surface on the protocol stream as a handshake
    // error frame, then the process exits with the protocol error code.
    process.stdout.write(encodeFrame(errorFrame("handshake", (e as Error).message)));
    return 3;
  }

  const options = { advertiseVersion: args.advertiseVersion };
  if (args.transport === "stdio") {
    await serveStream(model, process.stdin, process.stdout, options);
    return 0;
  }

  const server = net.createServer((socket) => {
    void serveStream(model, socket, socket, options).then(() => socket.end());
  });
  await new Promise<void>((resolve) => server.listen(args.port, args.host, resolve));
  const address = server.address() as net.AddressInfo;
  process.stderr.write(`serving on ${address.address}:${address.port}\n`);
  await new Promise<void>((resolve) => server.on("close", resolve));
  return 0;
}

main().then(
  (code) => {
    process.exitCode = code;
  },
  (e) => {
    process.stderr.write(`fatal: ${(e as Error).stack}\n`);
    process.exitCode = 1;
  },
);
