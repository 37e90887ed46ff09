/**
 * Deterministic stand-in backbone: a bank of seeded random 3x3x3 convolution
 * filters with ReLU, average-pooled to the requested output geometry.
 *
 * Pretrained weights are deliberately out of scope here; which backbone
 * produced a file is a manifest field, and the consumer is backbone-agnostic.
 * The properties that matter for the pipeline hold: features are a pure,
 * seeded function of the pixels, distinct images produce distinct features,
 * and the same (image, seed, geometry) always yields identical bytes.
 */

import { RasterImage, resize } from './image';

export const BACKBONE_ID = 'seeded-conv-v1';

/** Deterministic 32-bit PRNG (mulberry32); identical streams on every platform. */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function filterBank(count: number, seed: number): Float64Array {
  // count filters x 3 channels x 3 x 3, values centered on zero
  const rand = mulberry32(seed);
  const bank = new Float64Array(count * 27);
  for (let i = 0; i < bank.length; i++) bank[i] = rand() * 2 - 1;
  return bank;
}

function workingSize(img: RasterImage, d: number): { width: number; height: number } {
  const target = Math.max(32, 4 * d);
  if (img.width >= img.height) {
    return { width: target, height: Math.max(d, Math.round((img.height / img.width) * target)) };
  }
  return { width: Math.max(d, Math.round((img.width / img.height) * target)), height: target };
}

/** One filter's ReLU response map over a working-resolution image. */
function response(
  work: RasterImage, bank: Float64Array, filter: number, out: Float64Array,
): void {
  const { width, height, pixels } = work;
  const base = filter * 27;
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      let acc = 0;
      for (let dy = -1; dy <= 1; dy++) {
        const yy = Math.min(height - 1, Math.max(0, y + dy));
        for (let dx = -1; dx <= 1; dx++) {
          const xx = Math.min(width - 1, Math.max(0, x + dx));
          const tap = base + ((dy + 1) * 3 + (dx + 1)) * 3;
          const px = (yy * width + xx) * 3;
          acc += bank[tap] * pixels[px]
               + bank[tap + 1] * pixels[px + 1]
               + bank[tap + 2] * pixels[px + 2];
        }
      }
      out[y * width + x] = acc > 0 ? acc : 0;
    }
  }
}

function poolToGrid(
  map: Float64Array, width: number, height: number, d: number, out: Float32Array, stride: number, offset: number,
): void {
  for (let i = 0; i < d; i++) {
    const y0 = Math.floor((i * height) / d);
    const y1 = Math.max(y0 + 1, Math.floor(((i + 1) * height) / d));
    for (let j = 0; j < d; j++) {
      const x0 = Math.floor((j * width) / d);
      const x1 = Math.max(x0 + 1, Math.floor(((j + 1) * width) / d));
      let acc = 0;
      for (let y = y0; y < y1; y++) {
        for (let x = x0; x < x1; x++) acc += map[y * width + x];
      }
      out[(i * d + j) * stride + offset] = acc / ((y1 - y0) * (x1 - x0));
    }
  }
}

/**
 * k feature maps of size d x d, returned as the (d*d) x k object matrix the
 * VEF1 payload stores: object (i*d + j) holds every filter's pooled response
 * at cell (i, j).
 */
export function gridObjects(img: RasterImage, k: number, d: number, seed: number): Float32Array {
  const { width, height } = workingSize(img, d);
  const work = resize(img, width, height);
  const bank = filterBank(k, seed);
  const map = new Float64Array(width * height);
  const objects = new Float32Array(d * d * k);
  for (let f = 0; f < k; f++) {
    response(work, bank, f, map);
    poolToGrid(map, width, height, d, objects, k, f);
  }
  return objects;
}

/**
 * Pooled per-box features: each filter's mean ReLU response inside the box
 * (box in original pixel coordinates, half-open, clamped).
 */
export function boxFeatures(
  img: RasterImage, boxes: Float32Array, featDim: number, seed: number,
): Float32Array {
  const m = boxes.length / 4;
  const { width, height } = workingSize(img, 1);
  const work = resize(img, width, height);
  const bank = filterBank(featDim, seed);
  const map = new Float64Array(width * height);
  const out = new Float32Array(m * featDim);
  const sx = width / img.width;
  const sy = height / img.height;
  for (let f = 0; f < featDim; f++) {
    response(work, bank, f, map);
    for (let b = 0; b < m; b++) {
      const x0 = Math.min(width - 1, Math.max(0, Math.floor(boxes[b * 4] * sx)));
      const y0 = Math.min(height - 1, Math.max(0, Math.floor(boxes[b * 4 + 1] * sy)));
      const x1 = Math.min(width, Math.max(x0 + 1, Math.ceil(boxes[b * 4 + 2] * sx)));
      const y1 = Math.min(height, Math.max(y0 + 1, Math.ceil(boxes[b * 4 + 3] * sy)));
      let acc = 0;
      for (let y = y0; y < y1; y++) {
        for (let x = x0; x < x1; x++) acc += map[y * width + x];
      }
      out[b * featDim + f] = acc / ((y1 - y0) * (x1 - x0));
    }
  }
  return out;
}
