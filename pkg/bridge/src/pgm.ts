/** Binary PGM (P5, maxval 255) read/write, matching the dataset contract. */

import { readFileSync, writeFileSync } from "node:fs";

export interface Pgm {
  height: number;
  width: number;
  data: Uint8Array; // row-major
}

export function encodePgm(height: number, width: number, data: Uint8Array): Buffer {
  if (data.length !== height * width) {
    throw new Error(`PGM data is ${data.length} bytes, expected ${height * width}`);
  }
  const header = Buffer.from(`P5\n${width} ${height}\n255\n`, "ascii");
  return Buffer.concat([header, Buffer.from(data)]);
}

export function writePgm(path: string, height: number, width: number, data: Uint8Array): void {
  writeFileSync(path, encodePgm(height, width, data));
}

export function decodePgm(raw: Buffer): Pgm {
  if (raw.length < 2 || raw[0] !== 0x50 || raw[1] !== 0x35) {
    throw new Error("not a binary PGM (P5) file");
  }
  let pos = 2;
  const fields: number[] = [];
  while (fields.length < 3) {
    while (pos < raw.length && isSpace(raw[pos])) pos++;
    if (pos < raw.length && raw[pos] === 0x23 /* # */) {
      while (pos < raw.length && raw[pos] !== 0x0a) pos++;
      continue;
    }
    const start = pos;
    while (pos < raw.length && !isSpace(raw[pos])) pos++;
    const token = raw.subarray(start, pos).toString("ascii");
    if (!/^\d+$/.test(token)) throw new Error("malformed PGM header");
    fields.push(parseInt(token, 10));
  }
  pos++; // single whitespace after maxval
  const [width, height, maxval] = fields;
  if (maxval !== 255) throw new Error(`unsupported PGM maxval ${maxval}`);
  const raster = raw.subarray(pos);
  if (raster.length !== height * width) {
    throw new Error(`PGM raster is ${raster.length} bytes, header says ${height * width}`);
  }
  return { height, width, data: new Uint8Array(raster) };
}

export function readPgm(path: string): Pgm {
  return decodePgm(readFileSync(path));
}

function isSpace(byte: number): boolean {
  return byte === 0x20 || byte === 0x09 || byte === 0x0a || byte === 0x0d;
}
