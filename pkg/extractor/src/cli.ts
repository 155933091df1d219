#!/usr/bin/env node
import { parseArgs } from 'util';
import { EncoderUnavailable } from './encoders';
import { ExtractConfig, extract } from './extract';

const USAGE =
  'usage: dgm-extract --encoder <id> --images <dir> --out <file.dgme> ' +
  '[--labels folder] [--probs] [--resize 256] [--batch 64]';

/** Returns the process exit code: 0 ok, 1 extraction problem, 2 bad usage. */
export function main(argv: string[]): number {
  let parsed;
  try {
    parsed = parseArgs({
      args: argv,
      options: {
        encoder: { type: 'string' },
        images: { type: 'string' },
        out: { type: 'string' },
        labels: { type: 'string', default: 'none' },
        probs: { type: 'boolean', default: false },
        resize: { type: 'string', default: '256' },
        batch: { type: 'string', default: '64' },
      },
      allowPositionals: false,
      strict: true, // unknown flags are hard errors
    });
  } catch (err) {
    process.stderr.write(`${(err as Error).message}\n${USAGE}\n`);
    return 2;
  }
  const v = parsed.values;
  if (!v.encoder || !v.images || !v.out) {
    process.stderr.write(`--encoder, --images and --out are required\n${USAGE}\n`);
    return 2;
  }
  if (v.labels !== 'folder' && v.labels !== 'none') {
    process.stderr.write(`--labels must be "folder" or "none", not ${JSON.stringify(v.labels)}\n`);
    return 2;
  }
  const resize = Number(v.resize);
  const batch = Number(v.batch);
  if (!Number.isInteger(resize) || resize < 1) {
    process.stderr.write(`--resize must be a positive integer\n`);
    return 2;
  }
  if (!Number.isInteger(batch) || batch < 1) {
    process.stderr.write(`--batch must be a positive integer\n`);
    return 2;
  }

  const cfg: ExtractConfig = {
    encoder: v.encoder,
    images: v.images,
    out: v.out,
    labels: v.labels,
    probs: v.probs as boolean,
    resize,
    batch,
    device: 'cpu',
  };
  let result;
  try {
    result = extract(cfg);
  } catch (err) {
    if (err instanceof EncoderUnavailable) {
      process.stderr.write(`encoder unavailable: ${err.message}\n`);
      return 2;
    }
    process.stderr.write(`${(err as Error).message}\n`);
    return 1;
  }

  for (const skip of result.skipped) {
    process.stderr.write(`skipped ${skip.path}: ${skip.reason}\n`);
  }
  process.stdout.write(`wrote ${cfg.out}: n=${result.written} d=${result.dim}\n`);
  if (result.skipped.length > 0.01 * result.candidates) {
    process.stderr.write(
      `${result.skipped.length}/${result.candidates} images skipped (over 1%)\n`,
    );
    return 1;
  }
  return 0;
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
