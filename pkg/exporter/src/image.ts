/**
 * Minimal raster decoding: binary PPM (P6) and PGM (P5), maxval <= 255.
 * Pixels are RGB interleaved in [0, 1]. No external imaging dependency.
 */

export interface RasterImage {
  width: number;
  height: number;
  /** RGB interleaved, length = width * height * 3, values in [0, 1] */
  pixels: Float64Array;
}

export class DecodeError extends Error {}

export function decodeNetpbm(buf: Buffer): RasterImage {
  const magic = buf.subarray(0, 2).toString('ascii');
  if (magic !== 'P6' && magic !== 'P5') {
    throw new DecodeError(`unsupported image magic ${JSON.stringify(magic)}`);
  }
  let off = 2;
  const fields: number[] = [];
  while (fields.length < 3) {
    if (off >= buf.length) throw new DecodeError('truncated netpbm header');
    const ch = String.fromCharCode(buf[off]);
    if (ch === '#') {
      while (off < buf.length && buf[off] !== 0x0a) off++;
      off++;
    } else if (/\s/.test(ch)) {
      off++;
    } else {
      let token = '';
      while (off < buf.length && !/\s/.test(String.fromCharCode(buf[off]))) {
        token += String.fromCharCode(buf[off]);
        off++;
      }
      const value = Number(token);
      if (!Number.isInteger(value) || value <= 0) {
        throw new DecodeError(`bad netpbm header token ${JSON.stringify(token)}`);
      }
      fields.push(value);
    }
  }
  off++; // single whitespace after maxval
  const [width, height, maxval] = fields;
  if (maxval > 255) throw new DecodeError(`16-bit netpbm not supported (maxval ${maxval})`);
  const channels = magic === 'P6' ? 3 : 1;
  const expect = width * height * channels;
  if (buf.length - off < expect) {
    throw new DecodeError(
      `truncated pixel data: need ${expect} bytes, have ${buf.length - off}`,
    );
  }
  const pixels = new Float64Array(width * height * 3);
  for (let i = 0; i < width * height; i++) {
    if (channels === 3) {
      pixels[i * 3] = buf[off + i * 3] / maxval;
      pixels[i * 3 + 1] = buf[off + i * 3 + 1] / maxval;
      pixels[i * 3 + 2] = buf[off + i * 3 + 2] / maxval;
    } else {
      const v = buf[off + i] / maxval;
      pixels[i * 3] = v;
      pixels[i * 3 + 1] = v;
      pixels[i * 3 + 2] = v;
    }
  }
  return { width, height, pixels };
}

export function encodePpm(img: RasterImage): Buffer {
  const header = Buffer.from(`P6\n${img.width} ${img.height}\n255\n`, 'ascii');
  const data = Buffer.alloc(img.width * img.height * 3);
  for (let i = 0; i < data.length; i++) {
    data[i] = Math.max(0, Math.min(255, Math.round(img.pixels[i] * 255)));
  }
  return Buffer.concat([header, data]);
}

export function toGray(img: RasterImage): Float64Array {
  const gray = new Float64Array(img.width * img.height);
  for (let i = 0; i < gray.length; i++) {
    gray[i] =
      0.299 * img.pixels[i * 3] + 0.587 * img.pixels[i * 3 + 1] + 0.114 * img.pixels[i * 3 + 2];
  }
  return gray;
}

/** Bilinear resize keeping 3 channels. */
export function resize(img: RasterImage, width: number, height: number): RasterImage {
  const out = new Float64Array(width * height * 3);
  const sx = img.width / width;
  const sy = img.height / height;
  for (let y = 0; y < height; y++) {
    const fy = Math.min((y + 0.5) * sy - 0.5, img.height - 1);
    const y0 = Math.max(0, Math.floor(fy));
    const y1 = Math.min(img.height - 1, y0 + 1);
    const wy = Math.max(0, fy - y0);
    for (let x = 0; x < width; x++) {
      const fx = Math.min((x + 0.5) * sx - 0.5, img.width - 1);
      const x0 = Math.max(0, Math.floor(fx));
      const x1 = Math.min(img.width - 1, x0 + 1);
      const wx = Math.max(0, fx - x0);
      for (let c = 0; c < 3; c++) {
        const p00 = img.pixels[(y0 * img.width + x0) * 3 + c];
        const p01 = img.pixels[(y0 * img.width + x1) * 3 + c];
        const p10 = img.pixels[(y1 * img.width + x0) * 3 + c];
        const p11 = img.pixels[(y1 * img.width + x1) * 3 + c];
        out[(y * width + x) * 3 + c] =
          p00 * (1 - wy) * (1 - wx) + p01 * (1 - wy) * wx + p10 * wy * (1 - wx) + p11 * wy * wx;
      }
    }
  }
  return { width, height, pixels: out };
}
