"""Pixel kernels with two interchangeable backends.

``_native`` is a compiled Cython extension; ``_fallback`` is pure numpy.
Both implement byte-for-byte identical semantics (all accumulation is either
integer or pinned-order float64), so which one loads is invisible to callers.
Selection happens once at import: the extension when available, else the
fallback; ``ATELIER_PURE_PYTHON=1`` forces the fallback for debugging and
benchmark comparison.
"""

import os

from . import _fallback

if os.environ.get("ATELIER_PURE_PYTHON", "").lower() in ("1", "true", "yes"):
    _impl = _fallback
    IMPLEMENTATION = "python"
else:
    try:
        from . import _native as _impl

        IMPLEMENTATION = "native"
    except ImportError:
        _impl = _fallback
        IMPLEMENTATION = "python"

luma_u8 = _impl.luma_u8
blur_u8 = _impl.blur_u8
sobel_i32 = _impl.sobel_i32
canny_nms_hyst = _impl.canny_nms_hyst
resize_bilinear_u8 = _impl.resize_bilinear_u8
resize_bilinear_u16 = _impl.resize_bilinear_u16
composite_u8 = _impl.composite_u8
depth_to_gray = _impl.depth_to_gray


def available_backends() -> dict:
    """Importable backend modules keyed by name, for tests and benchmarks."""
    backends = {"python": _fallback}
    try:
        from . import _native

        backends["native"] = _native
    except ImportError:
        pass
    return backends
