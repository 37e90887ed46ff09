/**
 * VEF1 feature container (little-endian), byte-compatible with the consumer:
 *
 *   magic "VEF1" | u8 kind (0=grid, 1=roi) | u16 idLen + imageId utf-8
 *   u32 M | u32 featDim
 *   grid: u32 k, u32 d            (M must equal d*d, featDim must equal k)
 *   roi:  M x 4 float32 boxes     (x1, y1, x2, y2 in pixels)
 *   M x featDim float32 payload, row-major
 */

export const MAGIC = Buffer.from('VEF1', 'ascii');

export type FeatureKind = 'grid' | 'roi';

export interface FeatureFile {
  imageId: string;
  kind: FeatureKind;
  m: number;
  featDim: number;
  /** row-major M x featDim */
  objects: Float32Array;
  /** grid only */
  grid?: { k: number; d: number };
  /** roi only: M x 4 (x1, y1, x2, y2) */
  boxes?: Float32Array;
}

export class Vef1FormatError extends Error {}

export function encodeVef1(file: FeatureFile): Buffer {
  const id = Buffer.from(file.imageId, 'utf-8');
  if (id.length > 0xffff) {
    throw new Vef1FormatError(`image id longer than 65535 bytes`);
  }
  if (file.objects.length !== file.m * file.featDim) {
    throw new Vef1FormatError(
      `payload length ${file.objects.length} != M*featDim = ${file.m * file.featDim}`,
    );
  }
  const head = Buffer.alloc(4 + 1 + 2 + id.length + 8);
  let off = 0;
  MAGIC.copy(head, off); off += 4;
  head.writeUInt8(file.kind === 'grid' ? 0 : 1, off); off += 1;
  head.writeUInt16LE(id.length, off); off += 2;
  id.copy(head, off); off += id.length;
  head.writeUInt32LE(file.m, off); off += 4;
  head.writeUInt32LE(file.featDim, off); off += 4;

  const parts: Buffer[] = [head];
  if (file.kind === 'grid') {
    const grid = file.grid;
    if (!grid) throw new Vef1FormatError('grid file without geometry');
    if (file.m !== grid.d * grid.d || file.featDim !== grid.k) {
      throw new Vef1FormatError(
        `grid geometry k=${grid.k}, d=${grid.d} inconsistent with ${file.m}x${file.featDim}`,
      );
    }
    const geo = Buffer.alloc(8);
    geo.writeUInt32LE(grid.k, 0);
    geo.writeUInt32LE(grid.d, 4);
    parts.push(geo);
  } else {
    const boxes = file.boxes;
    if (!boxes || boxes.length !== file.m * 4) {
      throw new Vef1FormatError(`roi file needs ${file.m}x4 boxes`);
    }
    parts.push(floats(boxes));
  }
  parts.push(floats(file.objects));
  return Buffer.concat(parts);
}

function floats(values: Float32Array): Buffer {
  const buf = Buffer.alloc(values.length * 4);
  for (let i = 0; i < values.length; i++) buf.writeFloatLE(values[i], i * 4);
  return buf;
}

/** Parse and validate a VEF1 buffer (used by round-trip tests). */
export function decodeVef1(buf: Buffer): FeatureFile {
  let off = 0;
  const need = (n: number, what: string) => {
    if (off + n > buf.length) {
      throw new Vef1FormatError(
        `truncated reading ${what}: need ${n} bytes at offset ${off}, have ${buf.length}`,
      );
    }
  };
  need(4, 'magic');
  if (!buf.subarray(0, 4).equals(MAGIC)) {
    throw new Vef1FormatError(`bad magic ${buf.subarray(0, 4).toString('ascii')}`);
  }
  off = 4;
  need(3, 'header');
  const kindCode = buf.readUInt8(off); off += 1;
  if (kindCode !== 0 && kindCode !== 1) {
    throw new Vef1FormatError(`unknown kind byte ${kindCode}`);
  }
  const idLen = buf.readUInt16LE(off); off += 2;
  need(idLen, 'image id');
  const imageId = buf.subarray(off, off + idLen).toString('utf-8'); off += idLen;
  need(8, 'shape');
  const m = buf.readUInt32LE(off); off += 4;
  const featDim = buf.readUInt32LE(off); off += 4;

  let grid: { k: number; d: number } | undefined;
  let boxes: Float32Array | undefined;
  if (kindCode === 0) {
    need(8, 'grid geometry');
    const k = buf.readUInt32LE(off); off += 4;
    const d = buf.readUInt32LE(off); off += 4;
    if (m !== d * d) throw new Vef1FormatError(`grid object count ${m} != d*d for d=${d}`);
    if (featDim !== k) throw new Vef1FormatError(`grid feature dim ${featDim} != k=${k}`);
    grid = { k, d };
  } else {
    need(m * 16, 'roi boxes');
    boxes = new Float32Array(m * 4);
    for (let i = 0; i < boxes.length; i++) boxes[i] = buf.readFloatLE(off + i * 4);
    off += m * 16;
  }
  need(m * featDim * 4, 'payload');
  const objects = new Float32Array(m * featDim);
  for (let i = 0; i < objects.length; i++) objects[i] = buf.readFloatLE(off + i * 4);
  off += m * featDim * 4;
  if (off !== buf.length) {
    throw new Vef1FormatError(`${buf.length - off} trailing bytes after payload`);
  }
  return { imageId, kind: kindCode === 0 ? 'grid' : 'roi', m, featDim, objects, grid, boxes };
}
