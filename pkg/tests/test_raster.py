"""Raster primitives: grayscale conversion, resize, blur."""

import numpy as np
import pytest

import oracles
from atelier.raster import (
    Channels,
    GrayImage,
    RasterImage,
    UnsupportedChannels,
    gaussian_blur,
    resize_bilinear,
    to_grayscale,
    to_rgba,
)

from conftest import random_gray, random_rgba


def rgba(r, g, b, a=255, w=2, h=2):
    arr = np.zeros((h, w, 4), np.uint8)
    arr[:] = (r, g, b, a)
    return RasterImage.from_array(arr)


class TestGrayscale:
    def test_white_maps_to_255(self):
        assert to_grayscale(rgba(255, 255, 255)).to_array().tolist() == [[255, 255], [255, 255]]

    def test_pure_red_maps_to_76(self):
        assert int(to_grayscale(rgba(255, 0, 0)).to_array()[0, 0]) == 76

    def test_gray16_rejected(self):
        img = RasterImage.from_array(np.zeros((2, 2), np.uint16))
        with pytest.raises(UnsupportedChannels):
            to_grayscale(img)

    def test_gray8_passthrough(self, nprng):
        g = random_gray(nprng, 7, 5)
        assert to_grayscale(g.to_raster()).to_array().tolist() == g.to_array().tolist()

    def test_matches_oracle(self, nprng):
        img = random_rgba(nprng, 23, 11)
        got = to_grayscale(img).to_array()
        want = oracles.luma(img.to_array().tolist())
        assert got.tolist() == want


class TestToRgba:
    def test_gray_expands_with_opaque_alpha(self, nprng):
        g = random_gray(nprng, 5, 4)
        out = to_rgba(g.to_raster()).to_array()
        np.testing.assert_array_equal(out[:, :, 0], g.to_array())
        np.testing.assert_array_equal(out[:, :, 1], g.to_array())
        assert (out[:, :, 3] == 255).all()

    def test_rgba_passthrough(self, nprng):
        img = random_rgba(nprng, 3, 3)
        assert to_rgba(img) is img

    def test_gray16_rejected(self):
        with pytest.raises(UnsupportedChannels):
            to_rgba(RasterImage.from_array(np.zeros((2, 2), np.uint16)))


class TestResize:
    def test_identity_at_same_size(self, nprng):
        img = random_rgba(nprng, 9, 6)
        out = resize_bilinear(img, 9, 6)
        assert out.data == img.data

    def test_two_to_four_ramp(self):
        img = GrayImage.from_array(np.array([[0, 255]], np.uint8))
        out = resize_bilinear(img.to_raster(), 4, 1)
        assert out.to_array().tolist() == [[0, 64, 191, 255]]

    def test_constant_stays_constant(self):
        img = rgba(37, 120, 5, 200, w=8, h=3)
        out = resize_bilinear(img, 13, 29).to_array()
        assert (out.reshape(-1, 4) == (37, 120, 5, 200)).all()

    def test_output_within_input_range(self, nprng):
        img = random_gray(nprng, 11, 7).to_raster()
        arr = img.to_array()
        out = resize_bilinear(img, 4, 19).to_array()
        assert out.min() >= arr.min() and out.max() <= arr.max()

    def test_matches_oracle(self, nprng):
        for _ in range(5):
            w, h = int(nprng.integers(2, 16)), int(nprng.integers(2, 16))
            ow, oh = int(nprng.integers(1, 24)), int(nprng.integers(1, 24))
            img = random_rgba(nprng, w, h)
            got = resize_bilinear(img, ow, oh).to_array()
            want = oracles.resize(img.to_array().tolist(), ow, oh)
            assert got.tolist() == want

    def test_gray16_resizes(self, nprng):
        arr = nprng.integers(0, 65536, (6, 6), dtype=np.uint16)
        out = resize_bilinear(RasterImage.from_array(arr), 3, 3)
        assert out.channels is Channels.GRAY16
        assert out.to_array().max() <= arr.max()

    def test_bad_target_rejected(self, nprng):
        with pytest.raises(ValueError):
            resize_bilinear(random_rgba(nprng, 4, 4), 0, 4)


class TestBlur:
    def test_constant_unchanged(self):
        img = GrayImage.from_array(np.full((9, 9), 143, np.uint8))
        out = gaussian_blur(img, 1.4)
        assert (out.to_array() == 143).all()

    def test_impulse_center_weight(self):
        # Hand-computed: unit-sigma kernel has center weight w0 with
        # round(255 * w0^2) == 41 for the radius-3 separable pass.
        img = np.zeros((15, 15), np.uint8)
        img[7, 7] = 255
        out = gaussian_blur(GrayImage.from_array(img), 1.0).to_array()
        assert int(out[7, 7]) == 41
        assert out[7, 7] == out.max()

    def test_mirror_symmetry(self, nprng):
        img = random_gray(nprng, 12, 9)
        flipped = GrayImage.from_array(img.to_array()[:, ::-1].copy())
        out = gaussian_blur(img, 1.4).to_array()
        out_f = gaussian_blur(flipped, 1.4).to_array()
        np.testing.assert_array_equal(out[:, ::-1], out_f)

    def test_mass_approximately_preserved(self, nprng):
        for sigma in (0.3, 1.0, 2.2, 3.0):
            img = random_gray(nprng, 21, 17)
            out = gaussian_blur(img, sigma).to_array()
            drift = abs(int(out.sum()) - int(img.to_array().sum()))
            assert drift <= 21 * 17

    def test_matches_oracle(self, nprng):
        img = random_gray(nprng, 13, 8)
        got = gaussian_blur(img, 1.4).to_array()
        want = oracles.blur(img.to_array().tolist(), 1.4)
        assert got.tolist() == want

    def test_sigma_bounds(self, nprng):
        img = random_gray(nprng, 4, 4)
        with pytest.raises(ValueError):
            gaussian_blur(img, 0.0)
        with pytest.raises(ValueError):
            gaussian_blur(img, 11.0)


class TestRasterImage:
    def test_dimension_cap(self):
        with pytest.raises(ValueError):
            RasterImage(20000, 1, Channels.GRAY8, b"\x00" * 20000)

    def test_data_length_checked(self):
        with pytest.raises(ValueError):
            RasterImage(2, 2, Channels.RGBA8, b"\x00" * 3)

    def test_gray16_big_endian_round_trip(self):
        arr = np.array([[0, 1], [256, 65535]], np.uint16)
        img = RasterImage.from_array(arr)
        assert img.data[:2] == b"\x00\x00"
        assert img.data[-2:] == b"\xff\xff"
        np.testing.assert_array_equal(img.to_array(), arr)
