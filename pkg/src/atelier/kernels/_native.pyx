# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernel implementations.

Semantics must match atelier.kernels._fallback byte-for-byte; the fallback
module documents the contracts (integer accumulation, pinned float64 op
order, floor(x + 0.5) rounding). The equivalence test suite compares both
backends on random inputs.
"""

import numpy as np

from libc.math cimport fabs, floor, isfinite

cdef double TAN_22_5 = 0.41421356237309503


def luma_u8(const unsigned char[:, :, ::1] rgba):
    cdef Py_ssize_t h = rgba.shape[0], w = rgba.shape[1], y, x
    cdef double v
    out = np.empty((h, w), np.uint8)
    cdef unsigned char[:, ::1] o = out
    for y in range(h):
        for x in range(w):
            v = 0.299 * rgba[y, x, 0] + 0.587 * rgba[y, x, 1] + 0.114 * rgba[y, x, 2]
            v = floor(v + 0.5)
            if v < 0.0:
                v = 0.0
            elif v > 255.0:
                v = 255.0
            o[y, x] = <unsigned char>v
    return out


def blur_u8(const unsigned char[:, ::1] img, const long long[::1] q):
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1], k = q.shape[0]
    cdef Py_ssize_t r = k // 2, y, x, i, j
    cdef long long s = 0, acc, d
    for i in range(k):
        s += q[i]
    d = s * s

    tmp_arr = np.empty((h, w), np.int64)
    cdef long long[:, ::1] tmp = tmp_arr
    out = np.empty((h, w), np.uint8)
    cdef unsigned char[:, ::1] o = out

    for y in range(h):
        for x in range(w):
            acc = 0
            for i in range(k):
                j = x + i - r
                if j < 0:
                    j = 0
                elif j >= w:
                    j = w - 1
                acc += q[i] * <long long>img[y, j]
            tmp[y, x] = acc
    for y in range(h):
        for x in range(w):
            acc = 0
            for i in range(k):
                j = y + i - r
                if j < 0:
                    j = 0
                elif j >= h:
                    j = h - 1
                acc += q[i] * tmp[j, x]
            o[y, x] = <unsigned char>((2 * acc + d) / (2 * d))
    return out


def sobel_i32(const unsigned char[:, ::1] img):
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1], y, x, y0, y1, x0, x1
    gx_arr = np.empty((h, w), np.int32)
    gy_arr = np.empty((h, w), np.int32)
    cdef int[:, ::1] gx = gx_arr
    cdef int[:, ::1] gy = gy_arr
    cdef int a, b, c, d2, e, f
    for y in range(h):
        y0 = y - 1 if y > 0 else 0
        y1 = y + 1 if y < h - 1 else h - 1
        for x in range(w):
            x0 = x - 1 if x > 0 else 0
            x1 = x + 1 if x < w - 1 else w - 1
            a = img[y0, x0]; b = img[y0, x1]
            c = img[y, x0]; d2 = img[y, x1]
            e = img[y1, x0]; f = img[y1, x1]
            gx[y, x] = (b - a) + 2 * (d2 - c) + (f - e)
            gy[y, x] = (e - a) + 2 * (<int>img[y1, x] - <int>img[y0, x]) + (f - b)
    return gx_arr, gy_arr


def canny_nms_hyst(const int[:, ::1] gx, const int[:, ::1] gy, double low, double high):
    cdef Py_ssize_t h = gx.shape[0], w = gx.shape[1], y, x, ny, nx, sp
    cdef long long m, up, down
    cdef double agx, agy, lo2 = 16.0 * low * low, hi2 = 16.0 * high * high
    cdef int ax, ay, s, ux, uy

    mag2_arr = np.empty((h, w), np.int64)
    cdef long long[:, ::1] mag2 = mag2_arr
    for y in range(h):
        for x in range(w):
            mag2[y, x] = (
                <long long>gx[y, x] * gx[y, x] + <long long>gy[y, x] * gy[y, x]
            )

    # codes: 0 suppressed, 1 weak survivor, 2 strong survivor
    code_arr = np.zeros((h, w), np.uint8)
    cdef unsigned char[:, ::1] code = code_arr
    for y in range(h):
        for x in range(w):
            m = mag2[y, x]
            if m == 0 or <double>m < lo2:
                continue
            agx = fabs(<double>gx[y, x])
            agy = fabs(<double>gy[y, x])
            if agy <= agx * TAN_22_5:
                ax = 1; ay = 0
                s = 1 if gx[y, x] > 0 else -1
            elif agx <= agy * TAN_22_5:
                ax = 0; ay = 1
                s = 1 if gy[y, x] > 0 else -1
            elif (gx[y, x] > 0) == (gy[y, x] > 0):
                ax = 1; ay = 1
                s = 1 if gx[y, x] > 0 else -1
            else:
                ax = 1; ay = -1
                s = 1 if gx[y, x] > 0 else -1
            ux = s * ax; uy = s * ay

            ny = y + uy; nx = x + ux
            up = mag2[ny, nx] if 0 <= ny < h and 0 <= nx < w else 0
            ny = y - uy; nx = x - ux
            down = mag2[ny, nx] if 0 <= ny < h and 0 <= nx < w else 0
            if m >= up and m > down:
                code[y, x] = 2 if <double>m >= hi2 else 1

    out = np.zeros((h, w), np.uint8)
    cdef unsigned char[:, ::1] o = out
    stack_arr = np.empty(h * w, np.int64)
    cdef long long[::1] stack = stack_arr
    sp = 0
    for y in range(h):
        for x in range(w):
            if code[y, x] == 2:
                o[y, x] = 255
                stack[sp] = y * w + x
                sp += 1
    while sp > 0:
        sp -= 1
        y = stack[sp] // w
        x = stack[sp] % w
        for ny in range(y - 1, y + 2):
            if ny < 0 or ny >= h:
                continue
            for nx in range(x - 1, x + 2):
                if nx < 0 or nx >= w:
                    continue
                if code[ny, nx] != 0 and o[ny, nx] == 0:
                    o[ny, nx] = 255
                    stack[sp] = ny * w + nx
                    sp += 1
    return out


cdef void _fill_coords(Py_ssize_t n_src, Py_ssize_t n_dst,
                       Py_ssize_t[::1] i0, Py_ssize_t[::1] i1, double[::1] t):
    cdef double scale = (<double>n_src) / (<double>n_dst)
    cdef double s
    cdef Py_ssize_t i, lo
    for i in range(n_dst):
        s = (<double>i + 0.5) * scale - 0.5
        if s < 0.0:
            s = 0.0
        lo = <Py_ssize_t>floor(s)
        if lo > n_src - 1:
            lo = n_src - 1
        i0[i] = lo
        i1[i] = lo + 1 if lo + 1 < n_src else n_src - 1
        t[i] = s - <double>lo


def resize_bilinear_u8(const unsigned char[:, :, ::1] img, Py_ssize_t out_w, Py_ssize_t out_h):
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1], c = img.shape[2]
    cdef Py_ssize_t yo, xo, ch
    cdef double a, b, v, ty

    x0_arr = np.empty(out_w, np.intp); x1_arr = np.empty(out_w, np.intp)
    tx_arr = np.empty(out_w, np.float64)
    y0_arr = np.empty(out_h, np.intp); y1_arr = np.empty(out_h, np.intp)
    ty_arr = np.empty(out_h, np.float64)
    cdef Py_ssize_t[::1] x0 = x0_arr, x1 = x1_arr, y0 = y0_arr, y1 = y1_arr
    cdef double[::1] tx = tx_arr, tyv = ty_arr
    _fill_coords(w, out_w, x0, x1, tx)
    _fill_coords(h, out_h, y0, y1, tyv)

    out = np.empty((out_h, out_w, c), np.uint8)
    cdef unsigned char[:, :, ::1] o = out
    for yo in range(out_h):
        ty = tyv[yo]
        for xo in range(out_w):
            for ch in range(c):
                a = (1.0 - tx[xo]) * img[y0[yo], x0[xo], ch] + tx[xo] * img[y0[yo], x1[xo], ch]
                b = (1.0 - tx[xo]) * img[y1[yo], x0[xo], ch] + tx[xo] * img[y1[yo], x1[xo], ch]
                v = floor((1.0 - ty) * a + ty * b + 0.5)
                if v < 0.0:
                    v = 0.0
                elif v > 255.0:
                    v = 255.0
                o[yo, xo, ch] = <unsigned char>v
    return out


def resize_bilinear_u16(const unsigned short[:, ::1] img, Py_ssize_t out_w, Py_ssize_t out_h):
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1]
    cdef Py_ssize_t yo, xo
    cdef double a, b, v, ty

    x0_arr = np.empty(out_w, np.intp); x1_arr = np.empty(out_w, np.intp)
    tx_arr = np.empty(out_w, np.float64)
    y0_arr = np.empty(out_h, np.intp); y1_arr = np.empty(out_h, np.intp)
    ty_arr = np.empty(out_h, np.float64)
    cdef Py_ssize_t[::1] x0 = x0_arr, x1 = x1_arr, y0 = y0_arr, y1 = y1_arr
    cdef double[::1] tx = tx_arr, tyv = ty_arr
    _fill_coords(w, out_w, x0, x1, tx)
    _fill_coords(h, out_h, y0, y1, tyv)

    out = np.empty((out_h, out_w), np.uint16)
    cdef unsigned short[:, ::1] o = out
    for yo in range(out_h):
        ty = tyv[yo]
        for xo in range(out_w):
            a = (1.0 - tx[xo]) * img[y0[yo], x0[xo]] + tx[xo] * img[y0[yo], x1[xo]]
            b = (1.0 - tx[xo]) * img[y1[yo], x0[xo]] + tx[xo] * img[y1[yo], x1[xo]]
            v = floor((1.0 - ty) * a + ty * b + 0.5)
            if v < 0.0:
                v = 0.0
            elif v > 65535.0:
                v = 65535.0
            o[yo, xo] = <unsigned short>v
    return out


def composite_u8(const unsigned char[:, :, ::1] orig, const unsigned char[:, :, ::1] gen,
                 const unsigned char[:, ::1] alpha):
    cdef Py_ssize_t h = orig.shape[0], w = orig.shape[1], c = orig.shape[2], y, x, ch
    cdef long long a, v
    out = np.empty((h, w, c), np.uint8)
    cdef unsigned char[:, :, ::1] o = out
    for y in range(h):
        for x in range(w):
            a = alpha[y, x]
            for ch in range(c):
                v = a * gen[y, x, ch] + (255 - a) * orig[y, x, ch]
                o[y, x, ch] = <unsigned char>((2 * v + 255) / 510)
    return out


def depth_to_gray(const double[:, ::1] values, double lo, double hi):
    cdef Py_ssize_t h = values.shape[0], w = values.shape[1], y, x
    cdef double d, t
    out = np.zeros((h, w), np.uint8)
    cdef unsigned char[:, ::1] o = out
    for y in range(h):
        for x in range(w):
            d = values[y, x]
            if not isfinite(d):
                continue
            if hi > lo:
                if d < lo:
                    d = lo
                elif d > hi:
                    d = hi
                t = floor(255.0 * (hi - d) / (hi - lo) + 0.5)
                if t < 0.0:
                    t = 0.0
                elif t > 255.0:
                    t = 255.0
                o[y, x] = <unsigned char>t
            else:
                o[y, x] = 255
    return out
