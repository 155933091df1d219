import { existsSync } from 'fs';
import { readDgme } from './dgme';
import { FloatImage, resizeBicubic } from './preprocess';

export class EncoderUnavailable extends Error {}

export interface Encoder {
  id: string;
  dim: number;
  kind: 'embedding' | 'probs';
  encode: (img: FloatImage) => Float32Array;
}

interface RegistryEntry {
  id: string;
  dim: number;
  kind: 'embedding' | 'probs';
  filter: string;
  note: string;
  local: boolean;
}

// Pretrained networks are listed so their ids and output dims are documented,
// but this package ships no weights; only the pixel-level encoders run here.
export const REGISTRY: RegistryEntry[] = [
  { id: 'resize32', dim: 3072, kind: 'embedding', filter: 'bicubic', local: true,
    note: 'bicubic thumbnail, 32x32 RGB flattened to [0,1]' },
  { id: 'randproj-512', dim: 512, kind: 'embedding', filter: 'bicubic', local: true,
    note: 'fixed-seed sign projection of resize32 features' },
  { id: 'colorhist64', dim: 64, kind: 'probs', filter: 'bicubic', local: true,
    note: '4x4x4 RGB histogram, rows sum to 1' },
  { id: 'linear:<weights.dgme>', dim: 0, kind: 'embedding', filter: 'bicubic', local: true,
    note: 'user-supplied linear map applied to resize32 features' },
  { id: 'dinov2-vitl14', dim: 1024, kind: 'embedding', filter: 'bicubic', local: false,
    note: 'self-distilled ViT-L/14' },
  { id: 'clip-vitl14', dim: 768, kind: 'embedding', filter: 'bicubic', local: false,
    note: 'language-image ViT-L/14' },
  { id: 'mae-vitl16', dim: 1024, kind: 'embedding', filter: 'bicubic', local: false,
    note: 'masked-autoencoder ViT-L/16' },
  { id: 'inception-v3-pool', dim: 2048, kind: 'embedding', filter: 'bilinear', local: false,
    note: 'ImageNet classifier pool features' },
  { id: 'inception-v3-probs', dim: 1008, kind: 'probs', filter: 'bilinear', local: false,
    note: 'ImageNet classifier class probabilities' },
];

function thumbFeatures(img: FloatImage): Float32Array {
  const small = img.width === 32 ? img : resizeBicubic(img, 32);
  const out = new Float32Array(3072);
  for (let i = 0; i < 3072; i++) out[i] = small.data[i] / 255;
  return out;
}

// splitmix32: tiny deterministic PRNG for the projection signs
function splitmix32(seed: number): () => number {
  let s = seed | 0;
  return () => {
    s = (s + 0x9e3779b9) | 0;
    let t = s ^ (s >>> 16);
    t = Math.imul(t, 0x21f0aaad);
    t ^= t >>> 15;
    t = Math.imul(t, 0x735a2d97);
    t ^= t >>> 15;
    return t >>> 0;
  };
}

let projSigns: Float64Array | null = null;

function signMatrix(): Float64Array {
  if (!projSigns) {
    const next = splitmix32(0x5eed01);
    projSigns = new Float64Array(512 * 3072);
    for (let i = 0; i < projSigns.length; i++) {
      projSigns[i] = next() & 1 ? 1 : -1;
    }
  }
  return projSigns;
}

function randproj(img: FloatImage): Float32Array {
  const x = thumbFeatures(img);
  const signs = signMatrix();
  const out = new Float32Array(512);
  const norm = 1 / Math.sqrt(3072);
  for (let j = 0; j < 512; j++) {
    let acc = 0;
    const row = j * 3072;
    for (let i = 0; i < 3072; i++) acc += signs[row + i] * x[i];
    out[j] = acc * norm;
  }
  return out;
}

function colorHist(img: FloatImage): Float32Array {
  const counts = new Float64Array(64);
  const pixels = img.width * img.height;
  for (let i = 0; i < pixels; i++) {
    const r = bin(img.data[3 * i]);
    const g = bin(img.data[3 * i + 1]);
    const b = bin(img.data[3 * i + 2]);
    counts[r * 16 + g * 4 + b] += 1;
  }
  const out = new Float32Array(64);
  let hi = 0;
  for (let i = 0; i < 64; i++) {
    out[i] = counts[i] / pixels;
    if (out[i] > out[hi]) hi = i;
  }
  // float32 rounding can nudge the row sum off 1; absorb it in the mode bin
  let rest = 0;
  for (let i = 0; i < 64; i++) {
    if (i !== hi) rest += out[i];
  }
  out[hi] = 1 - rest;
  return out;
}

function bin(v: number): number {
  const q = Math.min(255, Math.max(0, Math.round(v)));
  return q >> 6;
}

function linearEncoder(path: string): Encoder {
  if (!existsSync(path)) {
    throw new EncoderUnavailable(`weights file not found: ${path}`);
  }
  let weights;
  try {
    weights = readDgme(path);
  } catch (err) {
    throw new EncoderUnavailable(`cannot read weights ${path}: ${(err as Error).message}`);
  }
  if (weights.d !== 3072) {
    throw new EncoderUnavailable(
      `weights must have 3072 columns (resize32 features), found ${weights.d}`,
    );
  }
  const { n: dim, data } = weights;
  return {
    id: `linear:${path}`,
    dim,
    kind: 'embedding',
    encode: img => {
      const x = thumbFeatures(img);
      const out = new Float32Array(dim);
      for (let j = 0; j < dim; j++) {
        let acc = 0;
        const row = j * 3072;
        for (let i = 0; i < 3072; i++) acc += data[row + i] * x[i];
        out[j] = acc;
      }
      return out;
    },
  };
}

export function resolveEncoder(id: string): Encoder {
  if (id.startsWith('linear:')) {
    return linearEncoder(id.slice('linear:'.length));
  }
  switch (id) {
    case 'resize32':
      return { id, dim: 3072, kind: 'embedding', encode: thumbFeatures };
    case 'randproj-512':
      return { id, dim: 512, kind: 'embedding', encode: randproj };
    case 'colorhist64':
      return { id, dim: 64, kind: 'probs', encode: colorHist };
    default: {
      const entry = REGISTRY.find(e => e.id === id);
      if (entry && !entry.local) {
        throw new EncoderUnavailable(
          `${id}: pretrained weights are not bundled with this package`,
        );
      }
      throw new EncoderUnavailable(`unknown encoder id ${JSON.stringify(id)}`);
    }
  }
}
