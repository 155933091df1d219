import { readFileSync, readdirSync, statSync, writeFileSync } from 'fs';
import { join } from 'path';
import { writeDgme } from './dgme';
import { Encoder, resolveEncoder } from './encoders';
import { decodePpm } from './ppm';
import { preprocessImage, toFloatImage } from './preprocess';

export interface ExtractConfig {
  encoder: string;
  images: string;
  out: string;
  labels: 'folder' | 'none';
  probs: boolean;
  resize: number;
  batch: number;
  device: 'cpu';
}

export interface SkipEntry {
  path: string; // relative to the images root
  reason: string;
}

export interface ExtractResult {
  written: number;
  dim: number;
  candidates: number;
  skipped: SkipEntry[];
  classes: string[] | null;
}

const IMAGE_EXT = /\.(ppm|pgm|png|jpg|jpeg|bmp)$/i;
const DECODABLE = /\.(ppm|pgm)$/i;

interface Candidate {
  rel: string;
  label: number;
}

function walkFiles(dir: string, prefix: string, out: string[]): void {
  for (const name of readdirSync(dir)) {
    const full = join(dir, name);
    const rel = prefix ? `${prefix}/${name}` : name;
    if (statSync(full).isDirectory()) {
      walkFiles(full, rel, out);
    } else if (IMAGE_EXT.test(name)) {
      out.push(rel);
    }
  }
}

/** Candidate rows in deterministic order: lexicographic on relative path. */
export function listImages(root: string, labels: 'folder' | 'none'): {
  candidates: Candidate[];
  classes: string[] | null;
} {
  const rels: string[] = [];
  walkFiles(root, '', rels);
  rels.sort();
  if (labels === 'none') {
    return { candidates: rels.map(rel => ({ rel, label: -1 })), classes: null };
  }
  // folder mode: the first path segment names the class
  const classes = new Set<string>();
  for (const rel of rels) {
    const cut = rel.indexOf('/');
    if (cut < 0) {
      throw new Error(
        `label mode "folder" requires class subdirectories, found ${rel} at the root`,
      );
    }
    classes.add(rel.slice(0, cut));
  }
  const sorted = [...classes].sort();
  const index = new Map(sorted.map((c, i) => [c, i]));
  const candidates = rels.map(rel => ({
    rel,
    label: index.get(rel.slice(0, rel.indexOf('/')))!,
  }));
  return { candidates, classes: sorted };
}

export function extract(cfg: ExtractConfig): ExtractResult {
  const encoder: Encoder = resolveEncoder(cfg.encoder);
  if (cfg.probs && encoder.kind !== 'probs') {
    throw new Error(`--probs requires a classifier encoder, ${encoder.id} is not one`);
  }
  if (!cfg.probs && encoder.kind === 'probs') {
    throw new Error(`${encoder.id} emits class probabilities; pass --probs`);
  }

  const { candidates, classes } = listImages(cfg.images, cfg.labels);
  const rows: Float32Array[] = [];
  const labels: number[] = [];
  const skipped: SkipEntry[] = [];
  for (const cand of candidates) {
    if (!DECODABLE.test(cand.rel)) {
      skipped.push({ path: cand.rel, reason: 'unsupported format (PPM/PGM only)' });
      continue;
    }
    let row: Float32Array;
    try {
      const raw = decodePpm(readFileSync(join(cfg.images, cand.rel)));
      row = encoder.encode(preprocessImage(toFloatImage(raw), cfg.resize));
    } catch (err) {
      skipped.push({ path: cand.rel, reason: (err as Error).message });
      continue;
    }
    rows.push(row);
    labels.push(cand.label);
  }
  if (rows.length === 0) {
    throw new Error(`no readable images under ${cfg.images}`);
  }

  const n = rows.length;
  const d = encoder.dim;
  const data = new Float32Array(n * d);
  rows.forEach((row, i) => data.set(row, i * d));
  writeDgme(
    cfg.out,
    data,
    n,
    d,
    cfg.labels === 'folder' ? Int32Array.from(labels) : null,
    { encoderId: encoder.id, sourceId: `images:${cfg.images}` },
  );

  const manifest = {
    encoder: encoder.id,
    images: cfg.images,
    resize: cfg.resize,
    candidates: candidates.length,
    written: n,
    classes,
    skipped,
  };
  writeFileSync(cfg.out + '.manifest.json', JSON.stringify(manifest, null, 2) + '\n');
  return { written: n, dim: d, candidates: candidates.length, skipped, classes };
}
