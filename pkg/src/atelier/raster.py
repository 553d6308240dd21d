"""Raster image types and elementary transforms.

Everything downstream (control-map preprocessing, backends, the mock) moves
pixels through these two types. Both are immutable value objects; operations
return new images. Heavy per-pixel work is delegated to ``atelier.kernels``,
which transparently selects the compiled extension or the numpy fallback.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import kernels


class Channels(Enum):
    GRAY8 = "gray8"
    GRAY16 = "gray16"
    RGBA8 = "rgba8"


_BYTES_PER_PIXEL = {Channels.GRAY8: 1, Channels.GRAY16: 2, Channels.RGBA8: 4}


class UnsupportedChannels(ValueError):
    """Operation not defined for this channel layout."""


@dataclass(frozen=True)
class RasterImage:
    """Decoded pixel grid, row-major. GRAY16 samples are big-endian."""

    width: int
    height: int
    channels: Channels
    data: bytes

    MAX_DIM = 16384

    def __post_init__(self):
        if not (1 <= self.width <= self.MAX_DIM and 1 <= self.height <= self.MAX_DIM):
            raise ValueError(f"image dimensions {self.width}x{self.height} out of range")
        expected = self.width * self.height * _BYTES_PER_PIXEL[self.channels]
        if len(self.data) != expected:
            raise ValueError(f"data length {len(self.data)}, expected {expected}")

    def bytes_per_pixel(self) -> int:
        return _BYTES_PER_PIXEL[self.channels]

    def to_array(self) -> np.ndarray:
        """Read-only array view: (h, w) for gray, (h, w, 4) for RGBA."""
        if self.channels == Channels.GRAY8:
            return np.frombuffer(self.data, np.uint8).reshape(self.height, self.width)
        if self.channels == Channels.GRAY16:
            return np.frombuffer(self.data, ">u2").reshape(self.height, self.width)
        return np.frombuffer(self.data, np.uint8).reshape(self.height, self.width, 4)

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "RasterImage":
        if arr.ndim == 3 and arr.shape[2] == 4 and arr.dtype == np.uint8:
            ch = Channels.RGBA8
        elif arr.ndim == 2 and arr.dtype == np.uint8:
            ch = Channels.GRAY8
        elif arr.ndim == 2 and arr.dtype.kind == "u" and arr.dtype.itemsize == 2:
            ch = Channels.GRAY16
            arr = arr.astype(">u2")
        else:
            raise ValueError(f"no channel layout for array {arr.dtype}/{arr.shape}")
        h, w = arr.shape[:2]
        return cls(w, h, ch, np.ascontiguousarray(arr).tobytes())


@dataclass(frozen=True)
class GrayImage:
    """Single-channel 8-bit image; the currency of edge and depth maps."""

    width: int
    height: int
    data: bytes

    def __post_init__(self):
        if not (1 <= self.width <= RasterImage.MAX_DIM and 1 <= self.height <= RasterImage.MAX_DIM):
            raise ValueError(f"image dimensions {self.width}x{self.height} out of range")
        if len(self.data) != self.width * self.height:
            raise ValueError(f"data length {len(self.data)}, expected {self.width * self.height}")

    def to_array(self) -> np.ndarray:
        return np.frombuffer(self.data, np.uint8).reshape(self.height, self.width)

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "GrayImage":
        if arr.ndim != 2 or arr.dtype != np.uint8:
            raise ValueError("expected 2-D uint8 array")
        h, w = arr.shape
        return cls(w, h, np.ascontiguousarray(arr).tobytes())

    def to_raster(self) -> RasterImage:
        return RasterImage(self.width, self.height, Channels.GRAY8, self.data)


def to_grayscale(img: RasterImage) -> GrayImage:
    """BT.601 luma: round(0.299 R + 0.587 G + 0.114 B). GRAY8 passes through."""
    if img.channels == Channels.GRAY8:
        return GrayImage(img.width, img.height, img.data)
    if img.channels != Channels.RGBA8:
        raise UnsupportedChannels(f"cannot convert {img.channels} to grayscale")
    out = kernels.luma_u8(img.to_array())
    return GrayImage.from_array(out)


def gaussian_kernel_q(sigma: float) -> np.ndarray:
    """Fixed-point Gaussian taps: round(exp(-k^2 / 2 sigma^2) * 2^20).

    The blur divides by the tap sum at the end, so these integers define an
    exactly normalized kernel while keeping every accumulation step integer
    (and therefore order-independent and platform-exact).
    """
    if not (0.0 < sigma <= 10.0):
        raise ValueError("sigma must be in (0, 10]")
    radius = math.ceil(3.0 * sigma)
    ks = np.arange(-radius, radius + 1, dtype=np.float64)
    w = np.exp(-(ks * ks) / (2.0 * sigma * sigma))
    q = np.floor(w * (1 << 20) + 0.5).astype(np.int64)
    return q


def gaussian_blur(img: GrayImage, sigma: float) -> GrayImage:
    """Separable Gaussian blur with replicate borders; radius = ceil(3 sigma).

    Single rounding step at the end; a constant image stays constant.
    """
    q = gaussian_kernel_q(sigma)
    out = kernels.blur_u8(img.to_array(), q)
    return GrayImage.from_array(out)


def resize_bilinear(img: RasterImage, new_width: int, new_height: int) -> RasterImage:
    """Bilinear resample with half-pixel-center mapping.

    Same-size requests return a pixel-identical copy. Output values never
    leave the per-channel input range.
    """
    if not (1 <= new_width <= RasterImage.MAX_DIM and 1 <= new_height <= RasterImage.MAX_DIM):
        raise ValueError("target dimensions out of range")
    if new_width == img.width and new_height == img.height:
        return RasterImage(img.width, img.height, img.channels, img.data)
    arr = img.to_array()
    if img.channels == Channels.GRAY16:
        native = arr.astype(np.uint16)
        out = kernels.resize_bilinear_u16(native, new_width, new_height)
        return RasterImage.from_array(out)
    out = kernels.resize_bilinear_u8(
        arr if arr.ndim == 3 else arr.reshape(*arr.shape, 1), new_width, new_height
    )
    if img.channels == Channels.GRAY8:
        out = out.reshape(new_height, new_width)
    return RasterImage.from_array(out)


def to_rgba(img: RasterImage) -> RasterImage:
    """Expand grayscale to opaque RGBA; RGBA passes through untouched."""
    if img.channels == Channels.RGBA8:
        return img
    if img.channels != Channels.GRAY8:
        raise UnsupportedChannels(f"cannot expand {img.channels} to RGBA")
    g = img.to_array()
    out = np.empty((img.height, img.width, 4), np.uint8)
    out[:, :, 0] = g
    out[:, :, 1] = g
    out[:, :, 2] = g
    out[:, :, 3] = 255
    return RasterImage.from_array(out)
