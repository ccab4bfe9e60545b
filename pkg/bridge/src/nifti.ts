/** Minimal NIfTI-1 reader: enough to pull axial slices out of 3D volumes.
 *
 * Handles .nii and .nii.gz, both endiannesses, the common scalar datatypes,
 * and scl_slope/scl_inter rescaling. Orientation handling beyond "z indexes
 * axial slices, rows are y, cols are x" is out of scope.
 */

import { readFileSync } from "node:fs";
import { gunzipSync } from "node:zlib";

export interface Volume {
  nx: number;
  ny: number;
  nz: number;
  data: Float64Array; // x fastest, then y, then z (NIfTI column-major)
}

const HEADER_SIZE = 348;

const DATATYPES: Record<number, { bytes: number; read: (dv: DataView, off: number, le: boolean) => number }> = {
  2: { bytes: 1, read: (dv, o) => dv.getUint8(o) },
  4: { bytes: 2, read: (dv, o, le) => dv.getInt16(o, le) },
  8: { bytes: 4, read: (dv, o, le) => dv.getInt32(o, le) },
  16: { bytes: 4, read: (dv, o, le) => dv.getFloat32(o, le) },
  64: { bytes: 8, read: (dv, o, le) => dv.getFloat64(o, le) },
  256: { bytes: 1, read: (dv, o) => dv.getInt8(o) },
  512: { bytes: 2, read: (dv, o, le) => dv.getUint16(o, le) },
};

export function parseNifti(raw: Buffer): Volume {
  if (raw.length >= 2 && raw[0] === 0x1f && raw[1] === 0x8b) {
    raw = gunzipSync(raw);
  }
  if (raw.length < HEADER_SIZE) {
    throw new Error("file too short for a NIfTI-1 header");
  }
  const dv = new DataView(raw.buffer, raw.byteOffset, raw.byteLength);
  let le = true;
  if (dv.getInt32(0, true) !== HEADER_SIZE) {
    if (dv.getInt32(0, false) === HEADER_SIZE) {
      le = false;
    } else {
      throw new Error("not a NIfTI-1 file (bad sizeof_hdr)");
    }
  }
  const magic = raw.subarray(344, 348).toString("ascii");
  if (!magic.startsWith("n+1") && !magic.startsWith("ni1")) {
    throw new Error(`not a NIfTI-1 file (magic ${JSON.stringify(magic)})`);
  }
  const ndim = dv.getInt16(40, le);
  if (ndim < 3) throw new Error(`expected a 3-D volume, got ${ndim}-D`);
  const nx = dv.getInt16(42, le);
  const ny = dv.getInt16(44, le);
  const nz = dv.getInt16(46, le);
  const datatype = dv.getInt16(70, le);
  const voxOffset = Math.floor(dv.getFloat32(108, le));
  let slope = dv.getFloat32(112, le);
  const inter = dv.getFloat32(116, le);
  if (slope === 0 || !Number.isFinite(slope)) slope = 1;
  const spec = DATATYPES[datatype];
  if (!spec) throw new Error(`unsupported NIfTI datatype code ${datatype}`);
  const count = nx * ny * nz;
  const need = voxOffset + count * spec.bytes;
  if (raw.length < need) {
    throw new Error(`truncated NIfTI data: have ${raw.length} bytes, need ${need}`);
  }
  const data = new Float64Array(count);
  for (let i = 0; i < count; i++) {
    data[i] = spec.read(dv, voxOffset + i * spec.bytes, le) * slope + (Number.isFinite(inter) ? inter : 0);
  }
  return { nx, ny, nz, data };
}

export function readNifti(path: string): Volume {
  return parseNifti(readFileSync(path));
}

/** Extract axial slice z as a row-major (ny, nx) array. */
export function axialSlice(vol: Volume, z: number): Float64Array {
  if (z < 0 || z >= vol.nz) throw new Error(`slice ${z} out of range 0..${vol.nz - 1}`);
  const out = new Float64Array(vol.ny * vol.nx);
  const base = z * vol.nx * vol.ny;
  for (let y = 0; y < vol.ny; y++) {
    for (let x = 0; x < vol.nx; x++) {
      out[y * vol.nx + x] = vol.data[base + y * vol.nx + x];
    }
  }
  return out;
}

/** Serialize a small volume; used by tests and fixtures. */
export function encodeNifti(vol: Volume, datatype: 16 | 64 = 16): Buffer {
  const spec = DATATYPES[datatype];
  const buf = Buffer.alloc(352 + vol.data.length * spec.bytes);
  const dv = new DataView(buf.buffer, buf.byteOffset, buf.byteLength);
  dv.setInt32(0, HEADER_SIZE, true);
  dv.setInt16(40, 3, true);
  dv.setInt16(42, vol.nx, true);
  dv.setInt16(44, vol.ny, true);
  dv.setInt16(46, vol.nz, true);
  dv.setInt16(70, datatype, true);
  dv.setInt16(72, spec.bytes * 8, true);
  dv.setFloat32(108, 352, true);
  dv.setFloat32(112, 1, true);
  dv.setFloat32(116, 0, true);
  buf.write("n+1\0", 344, "ascii");
  for (let i = 0; i < vol.data.length; i++) {
    if (datatype === 16) dv.setFloat32(352 + i * 4, vol.data[i], true);
    else dv.setFloat64(352 + i * 8, vol.data[i], true);
  }
  return buf;
}
