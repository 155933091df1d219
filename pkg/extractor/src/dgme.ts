import { readFileSync, writeFileSync } from 'fs';

// .dgme layout: 32-byte header, float32 rows, optional int32 labels.
// All fields little-endian regardless of host.
//   0  "DGME"
//   4  u32 version (= 1)
//   8  u64 row count
//   16 u64 dimension
//   24 u8 dtype (0 = float32)
//   25 u8 flags (bit 0: labels present)
//   26 six reserved zero bytes
export const HEADER_BYTES = 32;
const MAGIC = 'DGME';
const VERSION = 1;

export interface Sidecar {
  encoderId: string;
  sourceId: string;
}

export interface DgmeFile {
  n: number;
  d: number;
  data: Float32Array; // row-major, length n*d
  labels: Int32Array | null;
}

export function writeDgme(
  path: string,
  data: Float32Array,
  n: number,
  d: number,
  labels: Int32Array | null,
  sidecar: Sidecar,
): void {
  if (data.length !== n * d) {
    throw new Error(`data length ${data.length} != n*d = ${n * d}`);
  }
  if (labels && labels.length !== n) {
    throw new Error(`labels length ${labels.length} != n = ${n}`);
  }
  const total = HEADER_BYTES + 4 * n * d + (labels ? 4 * n : 0);
  const buf = Buffer.alloc(total);
  const view = new DataView(buf.buffer, buf.byteOffset, buf.byteLength);
  buf.write(MAGIC, 0, 'ascii');
  view.setUint32(4, VERSION, true);
  view.setBigUint64(8, BigInt(n), true);
  view.setBigUint64(16, BigInt(d), true);
  view.setUint8(24, 0); // float32
  view.setUint8(25, labels ? 1 : 0);
  let at = HEADER_BYTES;
  for (let i = 0; i < data.length; i++, at += 4) {
    view.setFloat32(at, data[i], true);
  }
  if (labels) {
    for (let i = 0; i < n; i++, at += 4) {
      view.setInt32(at, labels[i], true);
    }
  }
  writeFileSync(path, buf);
  const meta = { encoder_id: sidecar.encoderId, source_id: sidecar.sourceId };
  writeFileSync(path + '.json', JSON.stringify(meta, null, 2) + '\n');
}

export function readDgme(path: string): DgmeFile {
  const buf = readFileSync(path);
  if (buf.length < HEADER_BYTES) {
    throw new Error(`${path}: truncated header`);
  }
  const view = new DataView(buf.buffer, buf.byteOffset, buf.byteLength);
  if (buf.toString('ascii', 0, 4) !== MAGIC) {
    throw new Error(`${path}: bad magic`);
  }
  const version = view.getUint32(4, true);
  if (version !== VERSION) {
    throw new Error(`${path}: unsupported version ${version}`);
  }
  const n = Number(view.getBigUint64(8, true));
  const d = Number(view.getBigUint64(16, true));
  const dtype = view.getUint8(24);
  if (dtype !== 0) {
    throw new Error(`${path}: unsupported dtype ${dtype}`);
  }
  const hasLabels = (view.getUint8(25) & 1) === 1;
  const want = HEADER_BYTES + 4 * n * d + (hasLabels ? 4 * n : 0);
  if (buf.length !== want) {
    throw new Error(`${path}: expected ${want} bytes, found ${buf.length}`);
  }
  const data = new Float32Array(n * d);
  let at = HEADER_BYTES;
  for (let i = 0; i < data.length; i++, at += 4) {
    data[i] = view.getFloat32(at, true);
  }
  let labels: Int32Array | null = null;
  if (hasLabels) {
    labels = new Int32Array(n);
    for (let i = 0; i < n; i++, at += 4) {
      labels[i] = view.getInt32(at, true);
    }
  }
  return { n, d, data, labels };
}
