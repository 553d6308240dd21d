import { describe, expect, it } from "vitest";

import { decodeGray8, encodeGray8 } from "../src/png.js";

function gradient(w: number, h: number): Uint8Array {
  const px = new Uint8Array(w * h);
  for (let i = 0; i < px.length; i++) px[i] = (i * 7) % 256;
  return px;
}

describe("gray8 png codec", () => {
  it("round trips pixels exactly", () => {
    const px = gradient(33, 21);
    const out = decodeGray8(encodeGray8(33, 21, px));
    expect(out.width).toBe(33);
    expect(out.height).toBe(21);
    expect(out.pixels).toEqual(px);
  });

  it("round trips an image larger than one stored deflate block", () => {
    // 300*301 raw bytes > 65535 forces multiple blocks
    const px = gradient(300, 300);
    expect(decodeGray8(encodeGray8(300, 300, px)).pixels).toEqual(px);
  });

  it("encoding is deterministic", () => {
    const px = gradient(64, 64);
    expect(encodeGray8(64, 64, px)).toEqual(encodeGray8(64, 64, px));
  });

  it("starts with the png signature", () => {
    const bytes = encodeGray8(4, 4, new Uint8Array(16));
    expect([...bytes.slice(0, 8)]).toEqual([137, 80, 78, 71, 13, 10, 26, 10]);
  });

  it("rejects a wrong-sized buffer", () => {
    expect(() => encodeGray8(8, 8, new Uint8Array(63))).toThrow();
  });

  it("rejects garbage and corruption", () => {
    expect(() => decodeGray8(new Uint8Array([1, 2, 3, 4]))).toThrow("not a png");
    const good = encodeGray8(16, 16, gradient(16, 16));
    const bad = good.slice();
    bad[40] ^= 0xff; // flip a byte inside IDAT
    expect(() => decodeGray8(bad)).toThrow();
  });
});
