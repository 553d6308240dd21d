"""Conditioning-image preprocessing: edge maps, depth maps, masks, compositing.

This is the stage between a viewport capture and the diffusion backend. The
edge pipeline is the classic four-stage detector (blur, Sobel, non-maximum
suppression, hysteresis); depth buffers are normalized to the near-is-bright
8-bit convention; masks are feathered into alpha maps and drive the final
local-edit composite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels, png
from .raster import Channels, GrayImage, RasterImage, gaussian_blur, to_grayscale


class ImageTooSmall(ValueError):
    """Gradient operators need at least 3x3 pixels."""


class NoGeometry(ValueError):
    """Depth buffer contains only background pixels."""


class DimensionMismatch(ValueError):
    """Images that must share dimensions do not."""


class MissingDepth(ValueError):
    """Depth conditioning requested but no depth buffer available."""


DEPTH_SENTINEL = 65535  # 16-bit sample marking background pixels


@dataclass(frozen=True)
class CannySettings:
    """Thresholds apply to Sobel magnitude rescaled to 0-255 (divided by 4)."""

    low_threshold: float = 100.0
    high_threshold: float = 200.0
    sigma: float = 1.4

    def __post_init__(self):
        if not (0.0 < self.low_threshold <= self.high_threshold <= 255.0):
            raise ValueError("need 0 < low_threshold <= high_threshold <= 255")
        if not (0.0 < self.sigma <= 10.0):
            raise ValueError("sigma must be in (0, 10]")


@dataclass(frozen=True)
class DepthSettings:
    clip_percentile: float = 0.02

    def __post_init__(self):
        if not (0.0 <= self.clip_percentile < 0.5):
            raise ValueError("clip_percentile must be in [0, 0.5)")


@dataclass(frozen=True)
class MaskSpec:
    """Local-edit mask: 255 marks pixels to regenerate, 0 pixels to keep."""

    mask: GrayImage
    feather_radius: int = 0

    def __post_init__(self):
        # radius / 3 becomes the blur sigma, which is capped at 10
        if not (0 <= self.feather_radius <= 30):
            raise ValueError("feather_radius must be in [0, 30]")


@dataclass(frozen=True)
class ControlSet:
    """Conditioning images produced for one capture, plus the settings used."""

    edge: GrayImage | None
    depth: GrayImage | None
    canny: CannySettings = field(default_factory=CannySettings)
    depth_settings: DepthSettings = field(default_factory=DepthSettings)

    def __post_init__(self):
        if self.edge is None and self.depth is None:
            raise ValueError("control set needs at least one of edge/depth")
        dims = {(i.width, i.height) for i in (self.edge, self.depth) if i is not None}
        if len(dims) > 1:
            raise DimensionMismatch("edge and depth dimensions differ")


class DepthBuffer:
    """Per-pixel metric depth (smaller = nearer); +inf marks background."""

    def __init__(self, values: np.ndarray):
        values = np.asarray(values, np.float64)
        if values.ndim != 2:
            raise ValueError("depth values must be a 2-D grid")
        finite = values[np.isfinite(values)]
        if finite.size and finite.min() <= 0.0:
            raise ValueError("finite depth values must be positive")
        self.values = values
        self.height, self.width = values.shape

    @classmethod
    def from_png16(cls, data: bytes, near: float, far: float) -> "DepthBuffer":
        """Decode the interchange form: 16-bit gray PNG plus near/far scale.

        Sample v in [0, 65534] maps to near + (far - near) * v / 65534;
        sample 65535 is the background sentinel.
        """
        if not (0.0 < near < far):
            raise ValueError("need 0 < near < far")
        img = png.decode_png(data)
        if img.channels != Channels.GRAY16:
            raise ValueError("depth buffers must be 16-bit grayscale PNG")
        raw = img.to_array().astype(np.float64)
        values = near + ((far - near) * raw) / 65534.0
        values[raw == DEPTH_SENTINEL] = np.inf
        return cls(values)


def sobel_gradients(img: GrayImage) -> tuple[np.ndarray, np.ndarray]:
    """Gradient magnitude sqrt(gx^2 + gy^2) and direction atan2(gy, gx).

    3x3 Sobel kernels with replicate borders; y grows downward, so positive
    gy means brighter below.
    """
    if img.width < 3 or img.height < 3:
        raise ImageTooSmall("sobel needs at least 3x3 pixels")
    gx, gy = kernels.sobel_i32(img.to_array())
    gxf = gx.astype(np.float64)
    gyf = gy.astype(np.float64)
    return np.sqrt(gxf * gxf + gyf * gyf), np.arctan2(gyf, gxf)


def canny_edges(img: GrayImage, settings: CannySettings) -> GrayImage:
    """Binary edge map (values 0 or 255) from the four-stage pipeline.

    Magnitude is compared to the thresholds after division by 4 (the maximum
    Sobel response is 1020). On a magnitude plateau along the gradient axis,
    the pixel nearer the darker side survives suppression; the tie-break
    follows the gradient itself, so results commute with image rotation.
    """
    if img.width < 3 or img.height < 3:
        raise ImageTooSmall("canny needs at least 3x3 pixels")
    blurred = gaussian_blur(img, settings.sigma)
    gx, gy = kernels.sobel_i32(blurred.to_array())
    edges = kernels.canny_nms_hyst(gx, gy, settings.low_threshold, settings.high_threshold)
    return GrayImage.from_array(edges)


def _percentile(sorted_vals: np.ndarray, frac: float) -> float:
    """Linear-interpolation percentile of pre-sorted data."""
    pos = frac * (len(sorted_vals) - 1)
    i = math.floor(pos)
    if i + 1 >= len(sorted_vals):
        return float(sorted_vals[-1])
    t = pos - i
    return float(sorted_vals[i] + (sorted_vals[i + 1] - sorted_vals[i]) * t)


def normalize_depth(d: DepthBuffer, clip_percentile: float = 0.02) -> GrayImage:
    """Map depths to 8 bits, near is bright: v = round(255 (hi - d)/(hi - lo)).

    lo/hi are the clip and 1-clip percentiles of the finite-depth
    distribution and values are clamped into [lo, hi] first. Background
    pixels map to 0; a degenerate range maps every finite pixel to 255.
    """
    if not (0.0 <= clip_percentile < 0.5):
        raise ValueError("clip_percentile must be in [0, 0.5)")
    finite = d.values[np.isfinite(d.values)]
    if finite.size == 0:
        raise NoGeometry("depth buffer has no finite pixels")
    finite = np.sort(finite)
    lo = _percentile(finite, clip_percentile)
    hi = _percentile(finite, 1.0 - clip_percentile)
    out = kernels.depth_to_gray(d.values, lo, hi)
    return GrayImage.from_array(out)


def feather_mask(m: MaskSpec) -> GrayImage:
    """Soften the mask edge into an alpha map; sigma is radius / 3."""
    if m.feather_radius == 0:
        return m.mask
    return gaussian_blur(m.mask, m.feather_radius / 3.0)


def composite(original: RasterImage, generated: RasterImage, alpha: GrayImage) -> RasterImage:
    """Alpha-blend per channel: round((a*gen + (255-a)*orig) / 255).

    Pixels with alpha 0 are bit-identical to the original; that is the
    guarantee that local edits never touch unmasked regions.
    """
    for im in (original, generated):
        if im.channels != Channels.RGBA8:
            raise ValueError("composite requires RGBA images")
    if not (
        original.width == generated.width == alpha.width
        and original.height == generated.height == alpha.height
    ):
        raise DimensionMismatch("composite inputs must share dimensions")
    out = kernels.composite_u8(original.to_array(), generated.to_array(), alpha.to_array())
    return RasterImage.from_array(out)


def build_control_set(
    capture: RasterImage,
    depth: DepthBuffer | None,
    canny: CannySettings | None = None,
    depth_settings: DepthSettings | None = None,
    edge_enabled: bool = True,
    depth_enabled: bool = False,
) -> ControlSet:
    """Produce the enabled conditioning images for one capture."""
    canny = canny or CannySettings()
    depth_settings = depth_settings or DepthSettings()
    if not edge_enabled and not depth_enabled:
        raise ValueError("at least one control kind must be enabled")

    edge_img = None
    depth_img = None
    if edge_enabled:
        edge_img = canny_edges(to_grayscale(capture), canny)
    if depth_enabled:
        if depth is None:
            raise MissingDepth("depth conditioning enabled but no depth buffer")
        if (depth.width, depth.height) != (capture.width, capture.height):
            raise DimensionMismatch("depth buffer dimensions differ from capture")
        depth_img = normalize_depth(depth, depth_settings.clip_percentile)
    return ControlSet(edge=edge_img, depth=depth_img, canny=canny, depth_settings=depth_settings)
