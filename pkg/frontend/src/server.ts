/**
 * Line-oriented request loop: one JSON request per input line, one JSON
 * response per output line, strictly one request in flight per connection.
 */

import readline from "node:readline";
import net from "node:net";

import { EvalRequestSchema, errorResponse, validateShapes } from "./protocol.js";
import type { EvalResponse } from "./protocol.js";
import { stubPredict } from "./stub.js";

export type Mode = "stub" | "real";

export function handleLine(line: string, mode: Mode): EvalResponse | null {
  const trimmed = line.trim();
  if (!trimmed) {
    return null;
  }
  let raw: unknown;
  try {
    raw = JSON.parse(trimmed);
  } catch (e) {
    return errorResponse(null, `malformed JSON: ${(e as Error).message}`);
  }
  const parsed = EvalRequestSchema.safeParse(raw);
  if (!parsed.success) {
    const id =
      typeof (raw as { id?: unknown })?.id === "string"
        ? ((raw as { id: string }).id)
        : null;
    return errorResponse(id, `invalid request: ${parsed.error.issues[0]?.message}`);
  }
  const req = parsed.data;
  const shapeError = validateShapes(req);
  if (shapeError) {
    return errorResponse(req.id, shapeError);
  }
  if (mode === "real") {
    return errorResponse(
      req.id,
      "real model backend is not bundled in this build; run with --stub",
    );
  }
  try {
    return stubPredict(req);
  } catch (e) {
    // a failing prediction must not kill the process
    return errorResponse(req.id, `prediction failed: ${(e as Error).message}`);
  }
}

export function serveStdio(mode: Mode): Promise<void> {
  const rl = readline.createInterface({
    input: process.stdin,
    crlfDelay: Number.POSITIVE_INFINITY,
  });
  return new Promise((resolve) => {
    rl.on("line", (line) => {
      const response = handleLine(line, mode);
      if (response !== null) {
        process.stdout.write(JSON.stringify(response) + "\n");
      }
    });
    rl.on("close", resolve);
  });
}

export function serveTcp(port: number, mode: Mode): net.Server {
  const server = net.createServer((socket) => {
    const rl = readline.createInterface({
      input: socket,
      crlfDelay: Number.POSITIVE_INFINITY,
    });
    rl.on("line", (line) => {
      const response = handleLine(line, mode);
      if (response !== null) {
        socket.write(JSON.stringify(response) + "\n");
      }
    });
    socket.on("error", () => rl.close());
  });
  server.listen(port);
  return server;
}
