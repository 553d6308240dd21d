"""PNG codec tests: round trips, cross-checks against Pillow, rejection cases."""

import io
import struct
import zlib

import numpy as np
import pytest
from PIL import Image

from atelier.png import MalformedPng, UnsupportedPng, decode_png, encode_png
from atelier.raster import Channels, RasterImage

from conftest import pil_png_bytes, random_gray, random_rgba


def test_round_trip_rgba(nprng):
    for _ in range(20):
        w = int(nprng.integers(1, 40))
        h = int(nprng.integers(1, 40))
        img = random_rgba(nprng, w, h)
        out = decode_png(encode_png(img))
        assert out.width == w and out.height == h
        assert out.channels is Channels.RGBA8
        assert out.data == img.data


def test_round_trip_gray8(nprng):
    for _ in range(10):
        img = random_gray(nprng, int(nprng.integers(1, 40)), int(nprng.integers(1, 40)))
        out = decode_png(encode_png(img.to_raster()))
        assert out.data == img.to_raster().data


def test_round_trip_gray16(nprng):
    arr = nprng.integers(0, 65536, (9, 7), dtype=np.uint16)
    raster = RasterImage.from_array(arr)
    out = decode_png(encode_png(raster))
    assert out.channels is Channels.GRAY16
    np.testing.assert_array_equal(out.to_array(), arr)


def test_encode_deterministic(nprng):
    img = random_rgba(nprng, 33, 17)
    assert encode_png(img) == encode_png(img)


def test_single_white_pixel_round_trip():
    img = RasterImage.from_array(np.full((1, 1, 4), 255, np.uint8))
    data = encode_png(img)
    assert data[:8] == b"\x89PNG\r\n\x1a\n"
    assert decode_png(data).data == b"\xff\xff\xff\xff"


def test_pillow_decodes_our_output(nprng):
    arr = nprng.integers(0, 256, (21, 34, 4), dtype=np.uint8)
    data = encode_png(RasterImage.from_array(arr))
    ref = np.asarray(Image.open(io.BytesIO(data)))
    np.testing.assert_array_equal(ref, arr)


def test_we_decode_pillow_output(nprng):
    # Pillow applies real deflate and filter heuristics, so this exercises
    # the filter reversal paths our own encoder never produces.
    arr = nprng.integers(0, 256, (48, 31, 4), dtype=np.uint8)
    out = decode_png(pil_png_bytes(arr))
    np.testing.assert_array_equal(out.to_array(), arr)

    gray = nprng.integers(0, 256, (16, 25), dtype=np.uint8)
    out = decode_png(pil_png_bytes(gray))
    np.testing.assert_array_equal(out.to_array(), gray)

    g16 = nprng.integers(0, 65536, (12, 5), dtype=np.uint16)
    out = decode_png(pil_png_bytes(g16))
    np.testing.assert_array_equal(out.to_array(), g16)


def test_rgb_input_gets_opaque_alpha(nprng):
    # 8-bit RGB decodes too; alpha is synthesized as 255.
    arr = nprng.integers(0, 256, (10, 10, 3), dtype=np.uint8)
    out = decode_png(pil_png_bytes(arr))
    assert out.channels is Channels.RGBA8
    dec = out.to_array()
    np.testing.assert_array_equal(dec[:, :, :3], arr)
    assert (dec[:, :, 3] == 255).all()


def test_truncated_rejected(nprng):
    data = encode_png(random_rgba(nprng, 8, 8))
    with pytest.raises(MalformedPng):
        decode_png(data[:20])
    with pytest.raises(MalformedPng):
        decode_png(data[:-7])


def test_bad_signature_rejected():
    with pytest.raises(MalformedPng):
        decode_png(b"NOTAPNG!" + b"\x00" * 64)


def test_bad_crc_rejected(nprng):
    data = bytearray(encode_png(random_rgba(nprng, 8, 8)))
    idat = bytes(data).index(b"IDAT")
    data[idat + 8] ^= 0xFF
    with pytest.raises(MalformedPng):
        decode_png(bytes(data))


def test_palette_rejected(nprng):
    arr = nprng.integers(0, 256, (8, 8, 3), dtype=np.uint8)
    img = Image.fromarray(arr).convert("P")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    with pytest.raises(UnsupportedPng):
        decode_png(buf.getvalue())


def test_interlaced_rejected(nprng):
    # Pillow will not write interlaced files, so patch the IHDR by hand.
    data = bytearray(encode_png(random_rgba(nprng, 8, 8)))
    ihdr = bytes(data).index(b"IHDR")
    payload_at = ihdr + 4
    data[payload_at + 12] = 1  # interlace flag
    crc = zlib.crc32(bytes(data[ihdr:payload_at + 13]))
    data[payload_at + 13:payload_at + 17] = struct.pack(">I", crc)
    with pytest.raises(UnsupportedPng):
        decode_png(bytes(data))


def test_trailing_bytes_after_iend_ignored(nprng):
    # Decoding stops at IEND; appended junk does not change the result.
    img = random_rgba(nprng, 4, 4)
    data = encode_png(img)
    assert decode_png(data + b"junk").data == img.data
