import { mkdirSync, mkdtempSync, writeFileSync } from 'fs';
import { tmpdir } from 'os';
import { dirname, join } from 'path';

export type PixelFn = (x: number, y: number) => [number, number, number];

export function ppmBytes(width: number, height: number, fn: PixelFn): Buffer {
  const header = Buffer.from(`P6\n${width} ${height}\n255\n`, 'ascii');
  const px = Buffer.alloc(width * height * 3);
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const [r, g, b] = fn(x, y);
      const i = (y * width + x) * 3;
      px[i] = r;
      px[i + 1] = g;
      px[i + 2] = b;
    }
  }
  return Buffer.concat([header, px]);
}

export function writePpm(path: string, width: number, height: number, fn: PixelFn): void {
  mkdirSync(dirname(path), { recursive: true });
  writeFileSync(path, ppmBytes(width, height, fn));
}

export function solid(r: number, g: number, b: number): PixelFn {
  return () => [r, g, b];
}

export function tmpDir(): string {
  return mkdtempSync(join(tmpdir(), 'dgmx-'));
}
