import assert from 'node:assert/strict';
import test from 'node:test';

import { mulberry32 } from '../src/backbone';
import { RasterImage } from '../src/image';
import { proposeRois } from '../src/rois';

function texturedImage(width = 80, height = 60): RasterImage {
  const rand = mulberry32(11);
  const pixels = new Float64Array(width * height * 3);
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      // a bright busy patch plus background noise
      const busy = x > 20 && x < 46 && y > 14 && y < 40;
      const v = busy ? (x + y) % 2 : 0.1 * rand();
      const at = (y * width + x) * 3;
      pixels[at] = v;
      pixels[at + 1] = v;
      pixels[at + 2] = v;
    }
  }
  return { width, height, pixels };
}

function flatImage(width = 50, height = 50): RasterImage {
  return { width, height, pixels: new Float64Array(width * height * 3).fill(0.5) };
}

test('at most topN proposals, ordered by confidence', () => {
  const proposals = proposeRois(texturedImage(), 10);
  assert.ok(proposals.length >= 1);
  assert.ok(proposals.length <= 10);
  for (let i = 1; i < proposals.length; i++) {
    assert.ok(proposals[i - 1].confidence >= proposals[i].confidence);
  }
});

test('boxes stay inside the image bounds', () => {
  const img = texturedImage();
  for (const p of proposeRois(img, 10)) {
    const [x1, y1, x2, y2] = p.box;
    assert.ok(x1 >= 0 && y1 >= 0);
    assert.ok(x2 <= img.width && y2 <= img.height);
    assert.ok(x2 > x1 && y2 > y1);
  }
});

test('top-n cap respected for small n', () => {
  assert.ok(proposeRois(texturedImage(), 3).length <= 3);
});

test('a flat image proposes nothing', () => {
  assert.equal(proposeRois(flatImage(), 10).length, 0);
});

test('proposals are deterministic', () => {
  const a = proposeRois(texturedImage(), 10);
  const b = proposeRois(texturedImage(), 10);
  assert.deepEqual(a, b);
});
