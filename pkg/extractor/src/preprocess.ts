export class TooSmall extends Error {}

export interface FloatImage {
  width: number;
  height: number;
  data: Float64Array; // RGB interleaved, values on the source intensity scale
}

export function toFloatImage(img: {
  width: number;
  height: number;
  data: Uint8Array | Float64Array;
}): FloatImage {
  return {
    width: img.width,
    height: img.height,
    data: Float64Array.from(img.data),
  };
}

/** Square crop of side min(W, H), centered on the long axis (offset rounds down). */
export function centerCrop(img: FloatImage): FloatImage {
  const side = Math.min(img.width, img.height);
  const x0 = Math.floor((img.width - side) / 2);
  const y0 = Math.floor((img.height - side) / 2);
  if (side === img.width && side === img.height) return img;
  const out = new Float64Array(side * side * 3);
  for (let y = 0; y < side; y++) {
    const srcRow = ((y + y0) * img.width + x0) * 3;
    out.set(img.data.subarray(srcRow, srcRow + side * 3), y * side * 3);
  }
  return { width: side, height: side, data: out };
}

// Keys cubic, a = -0.5 (the common bicubic convolution kernel).
function cubic(x: number): number {
  x = Math.abs(x);
  if (x < 1) return (1.5 * x - 2.5) * x * x + 1;
  if (x < 2) return -0.5 * (((x - 5) * x + 8) * x - 4);
  return 0;
}

interface Taps {
  idx: Int32Array;
  w: Float64Array;
}

// Sample positions follow the pixel-center convention:
// src = (dst + 0.5) * srcLen/dstLen - 0.5.  When shrinking, the kernel is
// stretched by the inverse scale so it spans enough source pixels to
// antialias; taps past the edges clamp to the border pixel.
function axisTaps(srcLen: number, dstLen: number): Taps[] {
  const scale = dstLen / srcLen;
  const fscale = Math.max(1, 1 / scale);
  const support = 2 * fscale;
  const out: Taps[] = [];
  for (let i = 0; i < dstLen; i++) {
    const center = (i + 0.5) / scale - 0.5;
    const lo = Math.ceil(center - support);
    const hi = Math.floor(center + support);
    const idx = new Int32Array(hi - lo + 1);
    const w = new Float64Array(hi - lo + 1);
    let sum = 0;
    for (let k = lo; k <= hi; k++) {
      const weight = cubic((k - center) / fscale);
      idx[k - lo] = Math.min(Math.max(k, 0), srcLen - 1);
      w[k - lo] = weight;
      sum += weight;
    }
    for (let k = 0; k < w.length; k++) w[k] /= sum;
    out.push({ idx, w });
  }
  return out;
}

/** Separable bicubic resample of a square image to target x target. */
export function resizeBicubic(img: FloatImage, target: number): FloatImage {
  if (img.width !== img.height) {
    throw new Error('resizeBicubic expects a square image');
  }
  const src = img.width;
  const taps = axisTaps(src, target);

  // horizontal pass
  const tmp = new Float64Array(src * target * 3);
  for (let y = 0; y < src; y++) {
    const rowBase = y * src * 3;
    for (let x = 0; x < target; x++) {
      const { idx, w } = taps[x];
      let r = 0;
      let g = 0;
      let b = 0;
      for (let k = 0; k < idx.length; k++) {
        const p = rowBase + idx[k] * 3;
        r += w[k] * img.data[p];
        g += w[k] * img.data[p + 1];
        b += w[k] * img.data[p + 2];
      }
      const q = (y * target + x) * 3;
      tmp[q] = r;
      tmp[q + 1] = g;
      tmp[q + 2] = b;
    }
  }

  // vertical pass
  const out = new Float64Array(target * target * 3);
  for (let y = 0; y < target; y++) {
    const { idx, w } = taps[y];
    for (let x = 0; x < target; x++) {
      let r = 0;
      let g = 0;
      let b = 0;
      for (let k = 0; k < idx.length; k++) {
        const p = (idx[k] * target + x) * 3;
        r += w[k] * tmp[p];
        g += w[k] * tmp[p + 1];
        b += w[k] * tmp[p + 2];
      }
      const q = (y * target + x) * 3;
      out[q] = r;
      out[q + 1] = g;
      out[q + 2] = b;
    }
  }
  return { width: target, height: target, data: out };
}

/**
 * Center-crops along the long edge, then bicubic-resamples to target x target.
 * Output stays in float; ringing may carry values slightly outside [0, 255].
 */
export function preprocessImage(img: FloatImage, target = 256): FloatImage {
  if (Math.min(img.width, img.height) < target) {
    throw new TooSmall(
      `${img.width}x${img.height} is smaller than the ${target}x${target} target`,
    );
  }
  return resizeBicubic(centerCrop(img), target);
}
