"""Pure numpy kernel implementations.

These define the reference semantics the native extension must reproduce
exactly. Two rules make that possible:

* integer accumulation wherever the result feeds an exactness contract
  (blur, sobel, NMS comparisons, compositing), so evaluation order is free;
* where float64 is unavoidable (luma, resize, depth mapping), the operation
  order is pinned and mirrored in the C code, and every rounding is
  floor(x + 0.5).
"""

import numpy as np
from scipy import ndimage

TAN_22_5 = 0.41421356237309503  # tan(pi/8)


def luma_u8(rgba: np.ndarray) -> np.ndarray:
    r = rgba[:, :, 0].astype(np.float64)
    g = rgba[:, :, 1].astype(np.float64)
    b = rgba[:, :, 2].astype(np.float64)
    v = np.floor(0.299 * r + 0.587 * g + 0.114 * b + 0.5)
    return np.clip(v, 0.0, 255.0).astype(np.uint8)


def blur_u8(img: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Separable blur with integer taps q; replicate borders; one final round."""
    h, w = img.shape
    k = len(q)
    r = k // 2
    s = int(q.sum())
    d = s * s
    img64 = img.astype(np.int64)

    xs = np.clip(np.arange(-r, r + 1)[:, None] + np.arange(w)[None, :], 0, w - 1)
    tmp = np.zeros((h, w), np.int64)
    for i in range(k):
        tmp += q[i] * img64[:, xs[i]]

    ys = np.clip(np.arange(-r, r + 1)[:, None] + np.arange(h)[None, :], 0, h - 1)
    acc = np.zeros((h, w), np.int64)
    for i in range(k):
        acc += q[i] * tmp[ys[i], :]

    return ((2 * acc + d) // (2 * d)).astype(np.uint8)


def sobel_i32(img: np.ndarray) -> tuple:
    """3x3 Sobel cross-correlation with replicate borders."""
    p = np.pad(img, 1, mode="edge").astype(np.int32)
    gx = (
        (p[:-2, 2:] - p[:-2, :-2])
        + 2 * (p[1:-1, 2:] - p[1:-1, :-2])
        + (p[2:, 2:] - p[2:, :-2])
    )
    gy = (
        (p[2:, :-2] - p[:-2, :-2])
        + 2 * (p[2:, 1:-1] - p[:-2, 1:-1])
        + (p[2:, 2:] - p[:-2, 2:])
    )
    return gx, gy


def _nms_axes(gx: np.ndarray, gy: np.ndarray) -> tuple:
    """Quantized gradient axis per pixel, plus the uphill orientation.

    The axis is the nearest of 0/45/90/135 degrees. The uphill neighbor is
    the one the gradient points at (toward the brighter side); because that
    choice follows the image content, plateau tie-breaking commutes with
    image rotation.
    """
    agx = np.abs(gx).astype(np.float64)
    agy = np.abs(gy).astype(np.float64)
    horiz = agy <= agx * TAN_22_5
    vert = ~horiz & (agx <= agy * TAN_22_5)
    diag = ~horiz & ~vert
    same_sign = (gx > 0) == (gy > 0)

    ax = np.where(horiz | diag, 1, 0)
    ay = np.where(vert | (diag & same_sign), 1, np.where(diag, -1, 0))
    s = np.where(vert, np.sign(gy), np.sign(gx)).astype(np.int64)
    return (s * ax).astype(np.int64), (s * ay).astype(np.int64)


def canny_nms_hyst(gx: np.ndarray, gy: np.ndarray, low: float, high: float) -> np.ndarray:
    """Non-maximum suppression, double threshold, 8-connected hysteresis.

    Magnitude comparisons use the squared integer form: sqrt(gx^2+gy^2)/4
    against a threshold t is exactly gx^2+gy^2 against 16 t^2. A pixel
    survives NMS when it is >= its uphill neighbor and strictly > its
    downhill neighbor (out-of-image neighbors count as 0).
    """
    h, w = gx.shape
    mag2 = gx.astype(np.int64) ** 2 + gy.astype(np.int64) ** 2
    ux, uy = _nms_axes(gx, gy)

    padded = np.zeros((h + 2, w + 2), np.int64)
    padded[1:-1, 1:-1] = mag2
    yy, xx = np.mgrid[0:h, 0:w]
    up = padded[yy + 1 + uy, xx + 1 + ux]
    down = padded[yy + 1 - uy, xx + 1 - ux]
    keep = (mag2 > 0) & (mag2 >= up) & (mag2 > down)

    mag2f = mag2.astype(np.float64)
    weak = keep & (mag2f >= 16.0 * low * low)
    strong = keep & (mag2f >= 16.0 * high * high)

    labels, count = ndimage.label(weak, structure=np.ones((3, 3), np.int32))
    if count == 0:
        return np.zeros((h, w), np.uint8)
    strong_labels = np.zeros(count + 1, bool)
    strong_labels[labels[strong]] = True
    strong_labels[0] = False
    out = np.zeros((h, w), np.uint8)
    out[strong_labels[labels]] = 255
    return out


def _resize_coords(n_src: int, n_dst: int) -> tuple:
    scale = n_src / n_dst
    s = (np.arange(n_dst, dtype=np.float64) + 0.5) * scale - 0.5
    s = np.maximum(s, 0.0)
    i0 = np.minimum(np.floor(s).astype(np.int64), n_src - 1)
    i1 = np.minimum(i0 + 1, n_src - 1)
    t = s - i0
    return i0, i1, t


def _resize_float(img: np.ndarray, out_w: int, out_h: int, cap: float) -> np.ndarray:
    h, w = img.shape[:2]
    x0, x1, tx = _resize_coords(w, out_w)
    y0, y1, ty = _resize_coords(h, out_h)
    p = img.astype(np.float64)
    tx = tx[None, :, None]
    ty = ty[:, None, None]
    a = (1.0 - tx) * p[y0][:, x0] + tx * p[y0][:, x1]
    b = (1.0 - tx) * p[y1][:, x0] + tx * p[y1][:, x1]
    v = np.floor((1.0 - ty) * a + ty * b + 0.5)
    return np.clip(v, 0.0, cap)


def resize_bilinear_u8(img: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    return _resize_float(img, out_w, out_h, 255.0).astype(np.uint8)


def resize_bilinear_u16(img: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    out = _resize_float(img[:, :, None], out_w, out_h, 65535.0)
    return out[:, :, 0].astype(np.uint16)


def composite_u8(orig: np.ndarray, gen: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """Per channel: round((alpha*gen + (255-alpha)*orig) / 255), exact."""
    a = alpha.astype(np.int64)[:, :, None]
    x = a * gen.astype(np.int64) + (255 - a) * orig.astype(np.int64)
    return ((2 * x + 255) // 510).astype(np.uint8)


def depth_to_gray(values: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Near-is-bright mapping of clamped depths; non-finite pixels become 0."""
    finite = np.isfinite(values)
    out = np.zeros(values.shape, np.uint8)
    if hi > lo:
        d = np.clip(values[finite], lo, hi)
        t = np.floor(255.0 * (hi - d) / (hi - lo) + 0.5)
        out[finite] = np.clip(t, 0.0, 255.0).astype(np.uint8)
    else:
        out[finite] = 255
    return out
