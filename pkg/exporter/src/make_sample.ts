/**
 * Generate the committed 5-image sample and its exported features:
 * deterministic synthetic PPMs in sample-images/, then grid (k=64, d=4) and
 * roi (top 10, dim 64) exports under out-sample/.
 */

import { mkdirSync, writeFileSync } from 'node:fs';
import { join } from 'node:path';

import { mulberry32 } from './backbone';
import { exportGridFeatures, exportRoiFeatures } from './export';
import { encodePpm, RasterImage } from './image';

function blank(width: number, height: number): RasterImage {
  return { width, height, pixels: new Float64Array(width * height * 3) };
}

function set(img: RasterImage, x: number, y: number, r: number, g: number, b: number): void {
  const at = (y * img.width + x) * 3;
  img.pixels[at] = r;
  img.pixels[at + 1] = g;
  img.pixels[at + 2] = b;
}

export function makeSampleImages(dir: string): string[] {
  mkdirSync(dir, { recursive: true });
  const files: string[] = [];
  const w = 64;
  const h = 48;

  const gradient = blank(w, h);
  for (let y = 0; y < h; y++) {
    for (let x = 0; x < w; x++) set(gradient, x, y, x / w, y / h, 0.4);
  }

  const checker = blank(w, h);
  for (let y = 0; y < h; y++) {
    for (let x = 0; x < w; x++) {
      const on = (Math.floor(x / 8) + Math.floor(y / 8)) % 2 === 0;
      set(checker, x, y, on ? 0.9 : 0.1, on ? 0.1 : 0.9, 0.2);
    }
  }

  const blobs = blank(w, h);
  const centers: Array<[number, number, number]> = [[16, 12, 8], [44, 30, 10], [30, 40, 6]];
  for (let y = 0; y < h; y++) {
    for (let x = 0; x < w; x++) {
      let v = 0.05;
      for (const [cx, cy, rad] of centers) {
        const dist = Math.hypot(x - cx, y - cy);
        if (dist < rad) v = Math.max(v, 1 - dist / rad);
      }
      set(blobs, x, y, v, v * 0.6, 1 - v);
    }
  }

  const stripes = blank(w, h);
  for (let y = 0; y < h; y++) {
    for (let x = 0; x < w; x++) {
      const v = 0.5 + 0.5 * Math.sin(x * 0.8);
      set(stripes, x, y, v, v, 0.3 + 0.4 * (y / h));
    }
  }

  const noise = blank(w, h);
  const rand = mulberry32(12345);
  for (let y = 0; y < h; y++) {
    for (let x = 0; x < w; x++) set(noise, x, y, rand(), rand(), rand());
  }

  const images: Array<[string, RasterImage]> = [
    ['gradient.ppm', gradient],
    ['checker.ppm', checker],
    ['blobs.ppm', blobs],
    ['stripes.ppm', stripes],
    ['noise.ppm', noise],
  ];
  for (const [name, img] of images) {
    writeFileSync(join(dir, name), encodePpm(img));
    files.push(name);
  }
  return files;
}

function main(): void {
  const root = join(__dirname, '..', '..');
  const imagesDir = join(root, 'sample-images');
  makeSampleImages(imagesDir);
  const grid = exportGridFeatures(imagesDir, join(root, 'out-sample', 'grid'), { k: 64, d: 4 });
  const roi = exportRoiFeatures(imagesDir, join(root, 'out-sample', 'roi'), 10, 64);
  console.log(
    `sample: ${grid.records.length} grid + ${roi.records.length} roi feature file(s)`,
  );
}

if (require.main === module) {
  main();
}
