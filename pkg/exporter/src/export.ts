/**
 * Export orchestration: scan an image directory, run the backbone, write one
 * VEF1 file per decodable image plus a checksummed manifest. Undecodable
 * files are skipped and recorded; an empty input directory yields an empty
 * manifest and success.
 */

import { mkdirSync, readdirSync, readFileSync, writeFileSync } from 'node:fs';
import { join } from 'node:path';

import { BACKBONE_ID, boxFeatures, gridObjects } from './backbone';
import { decodeNetpbm, DecodeError, RasterImage } from './image';
import { ExportManifest, sha256, verifyManifest, writeManifest } from './manifest';
import { proposeRois } from './rois';
import { encodeVef1 } from './vef1';

export interface GridGeometry {
  k: number;
  d: number;
}

export interface ExportOptions {
  seed?: number;
}

const IMAGE_EXTENSIONS = ['.ppm', '.pgm', '.pnm'];

function listImages(imagesDir: string): string[] {
  return readdirSync(imagesDir)
    .filter((name) => IMAGE_EXTENSIONS.some((ext) => name.toLowerCase().endsWith(ext)))
    .sort();
}

function loadImage(imagesDir: string, name: string): RasterImage {
  return decodeNetpbm(readFileSync(join(imagesDir, name)));
}

function backboneTag(seed: number): string {
  return `${BACKBONE_ID}(seed=${seed})`;
}

export function exportGridFeatures(
  imagesDir: string,
  outDir: string,
  geometry: GridGeometry,
  options: ExportOptions = {},
): ExportManifest {
  const seed = options.seed ?? 0;
  mkdirSync(outDir, { recursive: true });
  const manifest: ExportManifest = {
    backbone: backboneTag(seed),
    createdBy: 'vef-exporter grid',
    records: [],
    skipped: [],
  };
  for (const name of listImages(imagesDir)) {
    let image: RasterImage;
    try {
      image = loadImage(imagesDir, name);
    } catch (err) {
      if (!(err instanceof DecodeError)) throw err;
      console.error(`skipping ${name}: ${err.message}`);
      manifest.skipped.push({ file: name, reason: err.message });
      continue;
    }
    const objects = gridObjects(image, geometry.k, geometry.d, seed);
    const blob = encodeVef1({
      imageId: name,
      kind: 'grid',
      m: geometry.d * geometry.d,
      featDim: geometry.k,
      objects,
      grid: geometry,
    });
    const fileName = `${name}.vef`;
    writeFileSync(join(outDir, fileName), blob);
    manifest.records.push({
      imageId: name,
      kind: 'grid',
      m: geometry.d * geometry.d,
      featDim: geometry.k,
      path: fileName,
      backbone: manifest.backbone,
      sha256: sha256(blob),
    });
  }
  writeManifest(outDir, manifest);
  verifyManifest(outDir, manifest);
  return manifest;
}

export function exportRoiFeatures(
  imagesDir: string,
  outDir: string,
  topN = 10,
  featDim = 2048,
  options: ExportOptions = {},
): ExportManifest {
  const seed = options.seed ?? 0;
  mkdirSync(outDir, { recursive: true });
  const manifest: ExportManifest = {
    backbone: backboneTag(seed),
    createdBy: 'vef-exporter roi',
    records: [],
    skipped: [],
  };
  for (const name of listImages(imagesDir)) {
    let image: RasterImage;
    try {
      image = loadImage(imagesDir, name);
    } catch (err) {
      if (!(err instanceof DecodeError)) throw err;
      console.error(`skipping ${name}: ${err.message}`);
      manifest.skipped.push({ file: name, reason: err.message });
      continue;
    }
    const proposals = proposeRois(image, topN);
    if (proposals.length === 0) {
      console.error(`warning: ${name} produced zero detections`);
    }
    const boxes = new Float32Array(proposals.length * 4);
    proposals.forEach((p, i) => boxes.set(p.box, i * 4));
    const objects = proposals.length
      ? boxFeatures(image, boxes, featDim, seed)
      : new Float32Array(0);
    const blob = encodeVef1({
      imageId: name,
      kind: 'roi',
      m: proposals.length,
      featDim,
      objects,
      boxes,
    });
    const fileName = `${name}.vef`;
    writeFileSync(join(outDir, fileName), blob);
    manifest.records.push({
      imageId: name,
      kind: 'roi',
      m: proposals.length,
      featDim,
      path: fileName,
      backbone: manifest.backbone,
      sha256: sha256(blob),
    });
  }
  writeManifest(outDir, manifest);
  verifyManifest(outDir, manifest);
  return manifest;
}
