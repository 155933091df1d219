export interface RawImage {
  width: number;
  height: number;
  data: Uint8Array; // RGB interleaved, row-major
}

/**
 * Decodes binary PPM (P6) and PGM (P5) images with 8-bit samples.
 * Grayscale input is replicated across the three channels.
 */
export function decodePpm(buf: Buffer): RawImage {
  let at = 0;

  function token(): string {
    // skip whitespace and '#' comments between header fields
    for (;;) {
      while (at < buf.length && isSpace(buf[at])) at++;
      if (at < buf.length && buf[at] === 0x23) {
        while (at < buf.length && buf[at] !== 0x0a) at++;
      } else {
        break;
      }
    }
    const start = at;
    while (at < buf.length && !isSpace(buf[at])) at++;
    if (at === start) throw new Error('truncated header');
    return buf.toString('ascii', start, at);
  }

  const magic = token();
  if (magic !== 'P6' && magic !== 'P5') {
    throw new Error(`unsupported format ${JSON.stringify(magic)}`);
  }
  const width = parseInt(token(), 10);
  const height = parseInt(token(), 10);
  const maxval = parseInt(token(), 10);
  if (!(width > 0) || !(height > 0)) throw new Error('bad dimensions');
  if (maxval !== 255) throw new Error(`unsupported maxval ${maxval}`);
  at++; // single whitespace byte separates header from samples

  const channels = magic === 'P6' ? 3 : 1;
  const need = width * height * channels;
  if (buf.length - at < need) throw new Error('truncated pixel data');

  const data = new Uint8Array(width * height * 3);
  if (channels === 3) {
    data.set(buf.subarray(at, at + need));
  } else {
    for (let i = 0; i < width * height; i++) {
      const v = buf[at + i];
      data[3 * i] = v;
      data[3 * i + 1] = v;
      data[3 * i + 2] = v;
    }
  }
  return { width, height, data };
}

function isSpace(b: number): boolean {
  return b === 0x20 || b === 0x09 || b === 0x0a || b === 0x0d || b === 0x0b || b === 0x0c;
}
