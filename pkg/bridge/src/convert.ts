/** Medical-volume exporter: axial slices -> the PGM + manifest dataset.
 *
 * The source directory holds volume pairs `<name>_img.nii[.gz]` and
 * `<name>_msk.nii[.gz]`. Every axial slice is cropped (centered on the
 * labeled region) and written out if its cropped label area passes the
 * foreground filter. Output loads unchanged with the primary dataset reader.
 */

import { mkdirSync, readdirSync, writeFileSync } from "node:fs";
import { join } from "node:path";

import { fnv1a64, splitmix64 } from "./hashing.js";
import { axialSlice, readNifti, type Volume } from "./nifti.js";
import { writePgm } from "./pgm.js";

export interface ConvertConfig {
  /** slices need at least this many labeled pixels after cropping */
  foregroundThreshold: number;
  cropHeight: number;
  cropWidth: number;
}

export const DEFAULT_CONVERT: ConvertConfig = {
  foregroundThreshold: 256,
  cropHeight: 200,
  cropWidth: 150,
};

export interface ConvertResult {
  written: number;
  volumes: number;
  skipped: string[]; // unreadable volumes, with reasons
}

interface ManifestEntry {
  id: string;
  height: number;
  width: number;
  seed: string; // u64 as decimal string; JSON numbers lose 64-bit precision
}

function volumeMinMax(vol: Volume): [number, number] {
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of vol.data) {
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  if (!Number.isFinite(lo) || hi <= lo) return [0, 1];
  return [lo, hi];
}

/** Crop window of (ch, cw) centered on the labeled centroid, clamped in-bounds. */
function cropWindow(
  mask: Float64Array, h: number, w: number, ch: number, cw: number,
): [number, number, number, number] {
  if (h <= ch && w <= cw) return [0, 0, h, w];
  let sr = 0;
  let sc = 0;
  let n = 0;
  for (let r = 0; r < h; r++) {
    for (let c = 0; c < w; c++) {
      if (mask[r * w + c] > 0) {
        sr += r;
        sc += c;
        n++;
      }
    }
  }
  const cy = n ? Math.round(sr / n) : Math.floor(h / 2);
  const cx = n ? Math.round(sc / n) : Math.floor(w / 2);
  const hh = Math.min(ch, h);
  const ww = Math.min(cw, w);
  const r0 = Math.min(Math.max(0, cy - Math.floor(hh / 2)), h - hh);
  const c0 = Math.min(Math.max(0, cx - Math.floor(ww / 2)), w - ww);
  return [r0, c0, hh, ww];
}

export function convertVolumes(
  src: string,
  dst: string,
  cfg: ConvertConfig = DEFAULT_CONVERT,
  log: (msg: string) => void = (m) => process.stderr.write(m + "\n"),
): ConvertResult {
  const entries = readdirSync(src).sort();
  const pairs: Array<[string, string, string]> = [];
  for (const name of entries) {
    const m = name.match(/^(.*)_img\.nii(\.gz)?$/);
    if (!m) continue;
    const msk = entries.find((e) => e === `${m[1]}_msk.nii${m[2] ?? ""}`)
      ?? entries.find((e) => e.startsWith(`${m[1]}_msk.nii`));
    if (!msk) {
      log(`warning: ${name} has no matching _msk volume, skipped`);
      continue;
    }
    pairs.push([m[1], name, msk]);
  }
  if (pairs.length === 0) log(`warning: no volume pairs found in ${src}`);

  mkdirSync(dst, { recursive: true });
  const manifest: ManifestEntry[] = [];
  const result: ConvertResult = { written: 0, volumes: 0, skipped: [] };

  for (const [stem, imgName, mskName] of pairs) {
    let img: Volume;
    let msk: Volume;
    try {
      img = readNifti(join(src, imgName));
      msk = readNifti(join(src, mskName));
      if (img.nx !== msk.nx || img.ny !== msk.ny || img.nz !== msk.nz) {
        throw new Error("image/label dimensions differ");
      }
    } catch (err) {
      const reason = err instanceof Error ? err.message : String(err);
      log(`warning: skipping ${stem}: ${reason}`);
      result.skipped.push(`${stem}: ${reason}`);
      continue;
    }
    result.volumes++;
    const [lo, hi] = volumeMinMax(img);
    for (let z = 0; z < img.nz; z++) {
      const maskSlice = axialSlice(msk, z);
      const imgSlice = axialSlice(img, z);
      const [r0, c0, hh, ww] = cropWindow(maskSlice, img.ny, img.nx, cfg.cropHeight, cfg.cropWidth);
      let fg = 0;
      const maskOut = new Uint8Array(hh * ww);
      const imgOut = new Uint8Array(hh * ww);
      for (let r = 0; r < hh; r++) {
        for (let c = 0; c < ww; c++) {
          const srcIdx = (r0 + r) * img.nx + (c0 + c);
          const labeled = maskSlice[srcIdx] > 0;
          if (labeled) fg++;
          maskOut[r * ww + c] = labeled ? 255 : 0;
          const v = (imgSlice[srcIdx] - lo) / (hi - lo);
          imgOut[r * ww + c] = Math.round(Math.min(1, Math.max(0, v)) * 255);
        }
      }
      if (fg < Math.max(1, cfg.foregroundThreshold)) continue; // strict filter
      const id = `${stem}_z${String(z).padStart(3, "0")}`;
      writePgm(join(dst, `${id}_img.pgm`), hh, ww, imgOut);
      writePgm(join(dst, `${id}_msk.pgm`), hh, ww, maskOut);
      manifest.push({
        id,
        height: hh,
        width: ww,
        seed: splitmix64(fnv1a64(id)).toString(),
      });
      result.written++;
    }
  }

  manifest.sort((a, b) => (a.id < b.id ? -1 : a.id > b.id ? 1 : 0));
  const manifestDoc = {
    // seeds are decimal strings: u64 does not survive JS JSON numbers
    cases: manifest.map((e) => ({
      height: e.height,
      id: e.id,
      seed: e.seed,
      width: e.width,
    })),
    format: "tepo-dataset",
    generator: null,
    version: 1,
  };
  writeFileSync(join(dst, "manifest.json"), JSON.stringify(manifestDoc, null, 2) + "\n");
  return result;
}
