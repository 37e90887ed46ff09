/** Export manifest: one record per written file, sha256-verified. */

import { createHash } from 'node:crypto';
import { readFileSync, writeFileSync } from 'node:fs';
import { join } from 'node:path';

export interface ManifestRecord {
  imageId: string;
  kind: 'grid' | 'roi';
  m: number;
  featDim: number;
  path: string; // relative to the output directory
  backbone: string;
  sha256: string;
}

export interface ExportManifest {
  backbone: string;
  createdBy: string;
  records: ManifestRecord[];
  skipped: { file: string; reason: string }[];
}

export function sha256(buf: Buffer): string {
  return createHash('sha256').update(buf).digest('hex');
}

export function writeManifest(outDir: string, manifest: ExportManifest, name = 'manifest.json'): string {
  const path = join(outDir, name);
  writeFileSync(path, JSON.stringify(manifest, null, 2) + '\n');
  return path;
}

/** Recompute every record's checksum against the files on disk. */
export function verifyManifest(outDir: string, manifest: ExportManifest): void {
  for (const record of manifest.records) {
    const actual = sha256(readFileSync(join(outDir, record.path)));
    if (actual !== record.sha256) {
      throw new Error(`checksum mismatch for ${record.path}: ${actual} != ${record.sha256}`);
    }
  }
}
