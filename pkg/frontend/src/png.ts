// Minimal 8-bit grayscale PNG codec for mask export.
//
// The encoder writes stored (uncompressed) deflate blocks so the bytes are
// identical for identical pixels on every browser; canvas.toBlob() gives no
// such guarantee. The decoder only accepts what the encoder emits (gray8,
// filter 0, stored blocks): it exists for round-trip checks, not as a
// general PNG reader.

const SIGNATURE = [137, 80, 78, 71, 13, 10, 26, 10];

const CRC_TABLE = (() => {
  const t = new Uint32Array(256);
  for (let n = 0; n < 256; n++) {
    let c = n;
    for (let k = 0; k < 8; k++) c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    t[n] = c >>> 0;
  }
  return t;
})();

function crc32(bytes: Uint8Array): number {
  let c = 0xffffffff;
  for (let i = 0; i < bytes.length; i++) {
    c = CRC_TABLE[(c ^ bytes[i]) & 0xff] ^ (c >>> 8);
  }
  return (c ^ 0xffffffff) >>> 0;
}

function adler32(bytes: Uint8Array): number {
  let a = 1;
  let b = 0;
  for (let i = 0; i < bytes.length; i++) {
    a = (a + bytes[i]) % 65521;
    b = (b + a) % 65521;
  }
  return ((b << 16) | a) >>> 0;
}

function be32(n: number): number[] {
  return [(n >>> 24) & 0xff, (n >>> 16) & 0xff, (n >>> 8) & 0xff, n & 0xff];
}

function chunk(type: string, data: Uint8Array): Uint8Array {
  const body = new Uint8Array(4 + data.length);
  for (let i = 0; i < 4; i++) body[i] = type.charCodeAt(i);
  body.set(data, 4);
  const out = new Uint8Array(8 + data.length + 4);
  out.set(be32(data.length), 0);
  out.set(body, 4);
  out.set(be32(crc32(body)), 8 + data.length);
  return out;
}

function zlibStored(raw: Uint8Array): Uint8Array {
  const blocks: number[] = [0x78, 0x01];
  for (let off = 0; off < raw.length || off === 0; off += 65535) {
    const n = Math.min(65535, raw.length - off);
    const final = off + n >= raw.length ? 1 : 0;
    blocks.push(final, n & 0xff, n >>> 8, ~n & 0xff, (~n >>> 8) & 0xff);
    for (let i = 0; i < n; i++) blocks.push(raw[off + i]);
    if (final) break;
  }
  const out = new Uint8Array(blocks.length + 4);
  out.set(blocks, 0);
  out.set(be32(adler32(raw)), blocks.length);
  return out;
}

export function encodeGray8(width: number, height: number, pixels: Uint8Array): Uint8Array {
  if (pixels.length !== width * height) {
    throw new Error(`pixel buffer is ${pixels.length}, expected ${width * height}`);
  }
  const raw = new Uint8Array(height * (width + 1));
  for (let y = 0; y < height; y++) {
    // filter byte 0, then the row
    raw.set(pixels.subarray(y * width, (y + 1) * width), y * (width + 1) + 1);
  }
  const ihdr = new Uint8Array([...be32(width), ...be32(height), 8, 0, 0, 0, 0]);
  const parts = [
    new Uint8Array(SIGNATURE),
    chunk("IHDR", ihdr),
    chunk("IDAT", zlibStored(raw)),
    chunk("IEND", new Uint8Array(0)),
  ];
  const total = parts.reduce((n, p) => n + p.length, 0);
  const out = new Uint8Array(total);
  let off = 0;
  for (const p of parts) {
    out.set(p, off);
    off += p.length;
  }
  return out;
}

export interface GrayPixels {
  width: number;
  height: number;
  pixels: Uint8Array;
}

function readBe32(d: Uint8Array, off: number): number {
  return ((d[off] << 24) | (d[off + 1] << 16) | (d[off + 2] << 8) | d[off + 3]) >>> 0;
}

export function decodeGray8(data: Uint8Array): GrayPixels {
  for (let i = 0; i < 8; i++) {
    if (data[i] !== SIGNATURE[i]) throw new Error("not a png");
  }
  let off = 8;
  let width = 0;
  let height = 0;
  const idat: Uint8Array[] = [];
  while (off + 8 <= data.length) {
    const len = readBe32(data, off);
    const type = String.fromCharCode(data[off + 4], data[off + 5], data[off + 6], data[off + 7]);
    const body = data.subarray(off + 4, off + 8 + len);
    if (crc32(body) !== readBe32(data, off + 8 + len)) throw new Error(`bad crc in ${type}`);
    const payload = data.subarray(off + 8, off + 8 + len);
    if (type === "IHDR") {
      width = readBe32(payload, 0);
      height = readBe32(payload, 4);
      if (payload[8] !== 8 || payload[9] !== 0 || payload[12] !== 0) {
        throw new Error("decoder only handles non-interlaced gray8");
      }
    } else if (type === "IDAT") {
      idat.push(payload);
    } else if (type === "IEND") {
      break;
    }
    off += 12 + len;
  }
  if (!width || !height) throw new Error("missing IHDR");

  let z = new Uint8Array(idat.reduce((n, p) => n + p.length, 0));
  let zo = 0;
  for (const p of idat) {
    z.set(p, zo);
    zo += p.length;
  }

  // stored-block inflate
  const raw = new Uint8Array(height * (width + 1));
  let ro = 0;
  let p = 2; // skip zlib header
  for (;;) {
    const final = z[p] & 1;
    if ((z[p] >> 1) & 3) throw new Error("decoder only handles stored blocks");
    const n = z[p + 1] | (z[p + 2] << 8);
    raw.set(z.subarray(p + 5, p + 5 + n), ro);
    ro += n;
    p += 5 + n;
    if (final) break;
  }
  if (ro !== raw.length) throw new Error("truncated image data");
  if (adler32(raw) !== readBe32(z, p)) throw new Error("bad adler32");

  const pixels = new Uint8Array(width * height);
  for (let y = 0; y < height; y++) {
    if (raw[y * (width + 1)] !== 0) throw new Error("decoder only handles filter 0");
    pixels.set(raw.subarray(y * (width + 1) + 1, (y + 1) * (width + 1)), y * width);
  }
  return { width, height, pixels };
}
