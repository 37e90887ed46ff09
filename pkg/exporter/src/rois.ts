/**
 * Saliency-driven region proposals: Sobel gradient energy scored over
 * multi-scale sliding windows, greedily picked with IoU suppression.
 * Boxes come back in original pixel coordinates, confidence-descending,
 * and always inside the image bounds. A flat image proposes nothing.
 */

import { RasterImage, resize, toGray } from './image';

export interface Proposal {
  /** x1, y1, x2, y2 in original pixel coordinates */
  box: [number, number, number, number];
  confidence: number;
}

const WORK_SIZE = 64;
const SCALES = [0.5, 0.33, 0.25];
const IOU_LIMIT = 0.3;
const MIN_ENERGY = 1e-6;

function energyMap(img: RasterImage): { map: Float64Array; width: number; height: number } {
  const scale = WORK_SIZE / Math.max(img.width, img.height);
  const width = Math.max(8, Math.round(img.width * Math.min(1, scale)));
  const height = Math.max(8, Math.round(img.height * Math.min(1, scale)));
  const gray = toGray(resize(img, width, height));
  const map = new Float64Array(width * height);
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const at = (yy: number, xx: number) =>
        gray[Math.min(height - 1, Math.max(0, yy)) * width + Math.min(width - 1, Math.max(0, xx))];
      const gx =
        at(y - 1, x + 1) + 2 * at(y, x + 1) + at(y + 1, x + 1)
        - at(y - 1, x - 1) - 2 * at(y, x - 1) - at(y + 1, x - 1);
      const gy =
        at(y + 1, x - 1) + 2 * at(y + 1, x) + at(y + 1, x + 1)
        - at(y - 1, x - 1) - 2 * at(y - 1, x) - at(y - 1, x + 1);
      map[y * width + x] = Math.hypot(gx, gy);
    }
  }
  return { map, width, height };
}

function iou(a: [number, number, number, number], b: [number, number, number, number]): number {
  const ix = Math.max(0, Math.min(a[2], b[2]) - Math.max(a[0], b[0]));
  const iy = Math.max(0, Math.min(a[3], b[3]) - Math.max(a[1], b[1]));
  const inter = ix * iy;
  const union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter;
  return union > 0 ? inter / union : 0;
}

export function proposeRois(img: RasterImage, topN: number): Proposal[] {
  const { map, width, height } = energyMap(img);
  const candidates: Proposal[] = [];
  for (const scale of SCALES) {
    const win = Math.max(4, Math.round(Math.min(width, height) * scale));
    const stride = Math.max(2, Math.floor(win / 2));
    for (let y = 0; y + win <= height; y += stride) {
      for (let x = 0; x + win <= width; x += stride) {
        let acc = 0;
        for (let yy = y; yy < y + win; yy++) {
          for (let xx = x; xx < x + win; xx++) acc += map[yy * width + xx];
        }
        const mean = acc / (win * win);
        if (mean > MIN_ENERGY) {
          candidates.push({ box: [x, y, x + win, y + win], confidence: mean });
        }
      }
    }
  }
  candidates.sort((a, b) => b.confidence - a.confidence || a.box[0] - b.box[0] || a.box[1] - b.box[1]);

  const kept: Proposal[] = [];
  for (const cand of candidates) {
    if (kept.length >= topN) break;
    if (kept.every((p) => iou(p.box, cand.box) <= IOU_LIMIT)) kept.push(cand);
  }

  // map back to original pixel coordinates, clamped to the image bounds
  const sx = img.width / width;
  const sy = img.height / height;
  return kept.map((p) => ({
    confidence: p.confidence,
    box: [
      Math.max(0, Math.min(img.width, p.box[0] * sx)),
      Math.max(0, Math.min(img.height, p.box[1] * sy)),
      Math.max(0, Math.min(img.width, p.box[2] * sx)),
      Math.max(0, Math.min(img.height, p.box[3] * sy)),
    ] as [number, number, number, number],
  }));
}
