"""Minimal PNG codec for the raster interchange format.

Decoding accepts the subset produced by CAD clients and diffusion backends:
8-bit grayscale, 16-bit grayscale, and 8-bit RGB / RGBA, non-interlaced.
Encoding is deterministic by construction: filter type None on every row and
a hand-assembled zlib stream of stored (uncompressed) deflate blocks, so the
same image always serializes to byte-identical output on every platform.
Stored blocks trade file size for that guarantee; artifacts here are
screen-resolution captures and render results, where this is acceptable.
"""

from __future__ import annotations

import struct
import zlib

from .raster import Channels, RasterImage

SIGNATURE = b"\x89PNG\r\n\x1a\n"

_COLOR_DECODE = {
    # (bit depth, color type) -> (channels enum or "rgb", samples per pixel)
    (8, 0): (Channels.GRAY8, 1),
    (16, 0): (Channels.GRAY16, 1),
    (8, 2): ("rgb", 3),
    (8, 6): (Channels.RGBA8, 4),
}

_COLOR_ENCODE = {
    Channels.GRAY8: (8, 0),
    Channels.GRAY16: (16, 0),
    Channels.RGBA8: (8, 6),
}


class MalformedPng(ValueError):
    """The byte stream is not a structurally valid PNG."""


class UnsupportedPng(ValueError):
    """Valid PNG, but outside the supported subset (palette, interlace, ...)."""


def _chunk(kind: bytes, payload: bytes) -> bytes:
    return (
        struct.pack(">I", len(payload))
        + kind
        + payload
        + struct.pack(">I", zlib.crc32(kind + payload) & 0xFFFFFFFF)
    )


def _stored_zlib(data: bytes) -> bytes:
    """zlib stream using only stored deflate blocks; byte-stable everywhere."""
    out = [b"\x78\x01"]
    n = len(data)
    pos = 0
    while True:
        block = data[pos : pos + 65535]
        pos += len(block)
        final = 1 if pos >= n else 0
        out.append(bytes([final]))
        out.append(struct.pack("<HH", len(block), len(block) ^ 0xFFFF))
        out.append(block)
        if final:
            break
    out.append(struct.pack(">I", zlib.adler32(data) & 0xFFFFFFFF))
    return b"".join(out)


def encode_png(img: RasterImage) -> bytes:
    """Serialize an image; identical input yields byte-identical output."""
    if img.channels not in _COLOR_ENCODE:
        raise UnsupportedPng(f"cannot encode channels {img.channels}")
    depth, color_type = _COLOR_ENCODE[img.channels]
    ihdr = struct.pack(">IIBBBBB", img.width, img.height, depth, color_type, 0, 0, 0)
    stride = img.width * img.bytes_per_pixel()
    rows = []
    for y in range(img.height):
        rows.append(b"\x00")  # filter: None
        rows.append(img.data[y * stride : (y + 1) * stride])
    idat = _stored_zlib(b"".join(rows))
    return b"".join(
        [SIGNATURE, _chunk(b"IHDR", ihdr), _chunk(b"IDAT", idat), _chunk(b"IEND", b"")]
    )


def _iter_chunks(data: bytes):
    pos = len(SIGNATURE)
    while pos < len(data):
        if pos + 8 > len(data):
            raise MalformedPng("truncated chunk header")
        (length,) = struct.unpack(">I", data[pos : pos + 4])
        if length > 0x7FFFFFFF:
            raise MalformedPng("chunk length out of range")
        kind = data[pos + 4 : pos + 8]
        end = pos + 8 + length
        if end + 4 > len(data):
            raise MalformedPng("truncated chunk payload")
        payload = data[pos + 8 : end]
        (crc,) = struct.unpack(">I", data[end : end + 4])
        if zlib.crc32(kind + payload) & 0xFFFFFFFF != crc:
            raise MalformedPng(f"bad CRC in chunk {kind!r}")
        yield kind, payload
        pos = end + 4


def _paeth(a: int, b: int, c: int) -> int:
    p = a + b - c
    pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
    if pa <= pb and pa <= pc:
        return a
    if pb <= pc:
        return b
    return c


def _unfilter(raw: bytes, width: int, height: int, bpp: int) -> bytes:
    stride = width * bpp
    if len(raw) != height * (stride + 1):
        raise MalformedPng("pixel data length mismatch")
    out = bytearray(height * stride)
    prev = bytes(stride)
    for y in range(height):
        base = y * (stride + 1)
        ftype = raw[base]
        line = bytearray(raw[base + 1 : base + 1 + stride])
        if ftype == 0:
            pass
        elif ftype == 1:  # Sub
            for i in range(bpp, stride):
                line[i] = (line[i] + line[i - bpp]) & 0xFF
        elif ftype == 2:  # Up
            for i in range(stride):
                line[i] = (line[i] + prev[i]) & 0xFF
        elif ftype == 3:  # Average
            for i in range(stride):
                left = line[i - bpp] if i >= bpp else 0
                line[i] = (line[i] + ((left + prev[i]) >> 1)) & 0xFF
        elif ftype == 4:  # Paeth
            for i in range(stride):
                left = line[i - bpp] if i >= bpp else 0
                upleft = prev[i - bpp] if i >= bpp else 0
                line[i] = (line[i] + _paeth(left, prev[i], upleft)) & 0xFF
        else:
            raise MalformedPng(f"unknown filter type {ftype}")
        out[y * stride : (y + 1) * stride] = line
        prev = line
    return bytes(out)


def decode_png(data: bytes) -> RasterImage:
    """Decode to a RasterImage; RGB is promoted to RGBA with opaque alpha."""
    if not isinstance(data, (bytes, bytearray)):
        raise TypeError("decode_png expects bytes")
    if len(data) < len(SIGNATURE) or data[: len(SIGNATURE)] != SIGNATURE:
        raise MalformedPng("bad PNG signature")

    header = None
    idat = bytearray()
    seen_end = False
    for kind, payload in _iter_chunks(bytes(data)):
        if header is None:
            if kind != b"IHDR":
                raise MalformedPng("first chunk is not IHDR")
            if len(payload) != 13:
                raise MalformedPng("bad IHDR length")
            header = struct.unpack(">IIBBBBB", payload)
            continue
        if kind == b"IDAT":
            idat.extend(payload)
        elif kind == b"IEND":
            seen_end = True
            break
        elif kind[0] & 0x20 == 0:
            # unhandled critical chunk (e.g. PLTE)
            raise UnsupportedPng(f"unsupported critical chunk {kind!r}")
        # ancillary chunks are skipped

    if header is None:
        raise MalformedPng("missing IHDR")
    if not seen_end:
        raise MalformedPng("missing IEND")

    width, height, depth, color_type, compression, filt, interlace = header
    if width == 0 or height == 0:
        raise MalformedPng("zero image dimension")
    if compression != 0 or filt != 0:
        raise MalformedPng("unknown compression or filter method")
    if interlace != 0:
        raise UnsupportedPng("interlaced PNG not supported")
    if color_type == 3:
        raise UnsupportedPng("palette PNG not supported")
    if (depth, color_type) not in _COLOR_DECODE:
        raise UnsupportedPng(f"unsupported bit depth {depth} / color type {color_type}")
    if width > RasterImage.MAX_DIM or height > RasterImage.MAX_DIM:
        raise UnsupportedPng("image dimensions exceed service cap")
    if not idat:
        raise MalformedPng("no IDAT data")

    try:
        raw = zlib.decompress(bytes(idat))
    except zlib.error as exc:
        raise MalformedPng(f"corrupt pixel data: {exc}") from None

    channels, samples = _COLOR_DECODE[(depth, color_type)]
    bpp = samples * (depth // 8)
    pixels = _unfilter(raw, width, height, bpp)

    if channels == "rgb":
        rgba = bytearray(width * height * 4)
        rgba[0::4] = pixels[0::3]
        rgba[1::4] = pixels[1::3]
        rgba[2::4] = pixels[2::3]
        rgba[3::4] = b"\xff" * (width * height)
        return RasterImage(width, height, Channels.RGBA8, bytes(rgba))
    return RasterImage(width, height, channels, pixels)
