"""Shared fixtures and image builders for the test suite."""

import io
import random

import numpy as np
import pytest
from PIL import Image

from atelier import png
from atelier.raster import GrayImage, RasterImage


@pytest.fixture
def rng():
    return random.Random(0x5EED)


@pytest.fixture
def nprng():
    return np.random.default_rng(0x5EED)


def random_gray(nprng, w, h):
    return GrayImage.from_array(nprng.integers(0, 256, (h, w), dtype=np.uint8))


def random_rgba(nprng, w, h):
    arr = nprng.integers(0, 256, (h, w, 4), dtype=np.uint8)
    return RasterImage.from_array(arr)


def pil_png_bytes(arr):
    """Encode an array through Pillow, independent of our own codec."""
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return buf.getvalue()


def solid_png(w, h, rgba=(128, 128, 128, 255)):
    arr = np.zeros((h, w, 4), np.uint8)
    arr[:] = rgba
    return png.encode_png(RasterImage.from_array(arr))


def gray16_png(arr):
    """16-bit grayscale PNG from a uint16 array, via Pillow."""
    return pil_png_bytes(arr.astype(np.uint16))


# The hysteresis fixture: a vertical step whose contrast drops from 220 to
# 110 halfway down, plus an isolated low-contrast step in the corner.  With
# thresholds (50, 100) the top half is strong, the bottom half weak but
# 8-connected to it, and the corner step is weak with no strong neighbour.
def hysteresis_fixture():
    img = np.zeros((24, 24), np.uint8)
    img[0:8, 12:] = 220
    img[8:16, 12:] = 110
    img[20:24, 0:6] = 110
    return img


def step_fixture(w=16, h=16, col=8, value=255):
    img = np.zeros((h, w), np.uint8)
    img[:, col:] = value
    return img
