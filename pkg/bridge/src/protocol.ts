/** Newline-delimited JSON protocol server (stdio or TCP).
 *
 *   -> {"op":"set_case","id":ID,"h":H,"w":W,"image":B64}   row-major u8
 *   <- {"ok":true}
 *   -> {"op":"predict","prompts":[...]}                    full history
 *   <- {"ok":true,"prob":B64}                              f32-LE, h*w values
 *   <- {"ok":false,"err":MSG}                              connection stays open
 */

import { createServer } from "node:net";
import { createInterface } from "node:readline";
import type { Readable, Writable } from "node:stream";

import { PromptableSegmenter, type Prompt, type SegmenterParams } from "./segmenter.js";

interface SetCaseMsg {
  op: "set_case";
  id: string;
  h: number;
  w: number;
  image: string;
}

interface PredictMsg {
  op: "predict";
  prompts: unknown[];
}

function parsePrompt(obj: unknown): Prompt {
  if (typeof obj !== "object" || obj === null) throw new Error("prompt must be an object");
  const p = obj as Record<string, unknown>;
  if (p.kind === "point") {
    if (typeof p.r !== "number" || typeof p.c !== "number") {
      throw new Error("point prompt needs integer r and c");
    }
    if (p.label !== "pos" && p.label !== "neg") {
      throw new Error(`bad point label ${JSON.stringify(p.label)}`);
    }
    return { kind: "point", r: p.r | 0, c: p.c | 0, label: p.label };
  }
  if (p.kind === "box") {
    for (const k of ["r0", "c0", "r1", "c1"]) {
      if (typeof p[k] !== "number") throw new Error(`box prompt needs integer ${k}`);
    }
    return {
      kind: "box",
      r0: (p.r0 as number) | 0,
      c0: (p.c0 as number) | 0,
      r1: (p.r1 as number) | 0,
      c1: (p.c1 as number) | 0,
    };
  }
  throw new Error(`unknown prompt kind ${JSON.stringify(p.kind)}`);
}

export class BridgeSession {
  private readonly model: PromptableSegmenter;
  private shape: [number, number] | null = null;

  constructor(params?: SegmenterParams) {
    this.model = new PromptableSegmenter(params);
  }

  handle(line: string): Record<string, unknown> {
    try {
      const msg = JSON.parse(line) as Record<string, unknown>;
      if (typeof msg !== "object" || msg === null) throw new Error("message must be a JSON object");
      if (msg.op === "set_case") return this.setCase(msg as unknown as SetCaseMsg);
      if (msg.op === "predict") return this.predict(msg as unknown as PredictMsg);
      throw new Error(`unknown op ${JSON.stringify(msg.op)}`);
    } catch (err) {
      return { ok: false, err: err instanceof Error ? err.message : String(err) };
    }
  }

  private setCase(msg: SetCaseMsg): Record<string, unknown> {
    const h = msg.h | 0;
    const w = msg.w | 0;
    if (h < 1 || w < 1) throw new Error(`bad grid size ${msg.h}x${msg.w}`);
    if (typeof msg.image !== "string") throw new Error("set_case needs a base64 image");
    const image = Buffer.from(msg.image, "base64");
    if (image.length !== h * w) {
      throw new Error(`image payload is ${image.length} bytes, expected ${h * w}`);
    }
    this.model.setCase(h, w, new Uint8Array(image));
    this.shape = [h, w];
    return { ok: true };
  }

  private predict(msg: PredictMsg): Record<string, unknown> {
    if (!this.shape) throw new Error("predict before set_case");
    if (!Array.isArray(msg.prompts)) throw new Error("predict needs a prompts array");
    const prompts = msg.prompts.map(parsePrompt);
    if (prompts.length === 0) throw new Error("predict requires at least one prompt");
    const prob = this.model.predict(prompts);
    const buf = Buffer.alloc(prob.length * 4);
    for (let i = 0; i < prob.length; i++) buf.writeFloatLE(prob[i], i * 4);
    return { ok: true, prob: buf.toString("base64") };
  }
}

export function serveStream(
  input: Readable,
  output: Writable,
  params?: SegmenterParams,
  onDone?: () => void,
): void {
  const session = new BridgeSession(params);
  const rl = createInterface({ input, crlfDelay: Infinity });
  rl.on("line", (line) => {
    if (!line.trim()) return; // blank lines are skipped, not answered
    output.write(JSON.stringify(session.handle(line)) + "\n");
  });
  rl.on("close", () => onDone?.());
}

export function serveTcp(
  port: number,
  params?: SegmenterParams,
  onListening?: (port: number) => void,
): ReturnType<typeof createServer> {
  // one session per connection; requests within a connection are serialized
  const server = createServer((socket) => {
    serveStream(socket, socket);
    socket.on("error", () => socket.destroy());
  });
  server.listen(port, "127.0.0.1", () => {
    const addr = server.address();
    if (addr && typeof addr === "object" && onListening) onListening(addr.port);
  });
  return server;
}
