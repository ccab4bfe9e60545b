#!/usr/bin/env node
/** sam-bridge: serve a promptable segmenter over the wire protocol, or
 * convert labeled 3-D volumes into the 2-D slice dataset format.
 *
 *   sam-bridge serve [--ckpt PARAMS.json] [--tcp PORT]
 *   sam-bridge convert --src DIR --dst DIR [--threshold N] [--crop HxW]
 */

import { readFileSync } from "node:fs";

import { DEFAULT_CONVERT, convertVolumes } from "./convert.js";
import { serveStream, serveTcp } from "./protocol.js";
import { DEFAULT_PARAMS, type SegmenterParams } from "./segmenter.js";

function fail(msg: string): never {
  process.stderr.write(`error: ${msg}\n`);
  process.exit(1);
}

function parseFlags(args: string[], known: string[]): Map<string, string> {
  const out = new Map<string, string>();
  for (let i = 0; i < args.length; i++) {
    const arg = args[i];
    if (!arg.startsWith("--")) fail(`unexpected argument ${arg}`);
    if (!known.includes(arg)) fail(`unknown flag ${arg}`);
    const value = args[i + 1];
    if (value === undefined) fail(`flag ${arg} needs a value`);
    out.set(arg, value);
    i++;
  }
  return out;
}

function loadParams(path: string | undefined): SegmenterParams {
  if (!path) return DEFAULT_PARAMS;
  let raw: string;
  try {
    raw = readFileSync(path, "utf-8");
  } catch (err) {
    fail(`cannot load model parameters ${path}: ${(err as Error).message}`);
  }
  let parsed: unknown;
  try {
    parsed = JSON.parse(raw);
  } catch (err) {
    fail(`model parameters ${path} are not valid JSON: ${(err as Error).message}`);
  }
  const params = { ...DEFAULT_PARAMS, ...(parsed as Partial<SegmenterParams>) };
  for (const key of ["gain", "patchRadius", "suppression", "anchorFraction"] as const) {
    if (typeof params[key] !== "number" || !Number.isFinite(params[key])) {
      fail(`model parameters ${path}: ${key} must be a finite number`);
    }
  }
  return params;
}

function cmdServe(args: string[]): void {
  const flags = parseFlags(args, ["--ckpt", "--tcp", "--device"]);
  const params = loadParams(flags.get("--ckpt")); // load failure exits here
  const tcp = flags.get("--tcp");
  if (tcp !== undefined) {
    const port = Number(tcp);
    if (!Number.isInteger(port) || port < 0 || port > 65535) fail(`bad TCP port ${tcp}`);
    serveTcp(port, params, (bound) => {
      process.stdout.write(`listening on 127.0.0.1:${bound}\n`);
    });
  } else {
    serveStream(process.stdin, process.stdout, params, () => process.exit(0));
  }
}

function cmdConvert(args: string[]): void {
  const flags = parseFlags(args, ["--src", "--dst", "--threshold", "--crop"]);
  const src = flags.get("--src");
  const dst = flags.get("--dst");
  if (!src || !dst) fail("convert needs --src DIR and --dst DIR");
  const cfg = { ...DEFAULT_CONVERT };
  const threshold = flags.get("--threshold");
  if (threshold !== undefined) {
    cfg.foregroundThreshold = Number(threshold);
    if (!Number.isInteger(cfg.foregroundThreshold) || cfg.foregroundThreshold < 0) {
      fail(`bad --threshold ${threshold}`);
    }
  }
  const crop = flags.get("--crop");
  if (crop !== undefined) {
    const m = crop.toLowerCase().match(/^(\d+)x(\d+)$/);
    if (!m) fail(`--crop must look like 200x150, got ${crop}`);
    cfg.cropHeight = Number(m[1]);
    cfg.cropWidth = Number(m[2]);
  }
  try {
    const result = convertVolumes(src, dst, cfg);
    process.stdout.write(
      `wrote ${result.written} slices from ${result.volumes} volumes to ${dst}\n`,
    );
  } catch (err) {
    fail((err as Error).message);
  }
}

const [, , command, ...rest] = process.argv;
switch (command) {
  case "serve":
    cmdServe(rest);
    break;
  case "convert":
    cmdConvert(rest);
    break;
  default:
    process.stderr.write(
      "usage: sam-bridge serve [--ckpt PARAMS.json] [--tcp PORT]\n" +
      "       sam-bridge convert --src DIR --dst DIR [--threshold N] [--crop HxW]\n",
    );
    process.exit(command ? 1 : 0);
}
