"""Deterministic stand-in for a diffusion server.

Output is a procedural value-noise field keyed on (seed, prompt hash,
width, height, image index), tinted by the prompt hash so different prompts
are visibly different. An edge control image is stamped into the output at
opacity proportional to its weight, which lets integration tests assert
that conditioning actually reaches the backend. All arithmetic is integer
or pinned float64, so two runs are byte-identical on any platform.
"""

from __future__ import annotations

import json

import numpy as np

from .. import kernels
from ..jobs import ControlKind, JobMode
from ..raster import RasterImage
from . import Backend, BackendRequest, BackendResult

_M64 = np.uint64(0xFFFFFFFFFFFFFFFF)
_CELL = 16  # noise lattice spacing in pixels


def fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in data:
        h = ((h ^ b) * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def _splitmix64(x: np.ndarray) -> np.ndarray:
    # finalizer only; the additive walk happens in the caller's keys
    z = x
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def _noise_channel(base: int, channel: int, width: int, height: int) -> np.ndarray:
    """Bilinearly interpolated lattice noise, uint8, shape (height, width)."""
    gw = width // _CELL + 2
    gh = height // _CELL + 2
    gx = np.arange(gw, dtype=np.uint64)[None, :]
    gy = np.arange(gh, dtype=np.uint64)[:, None]
    keys = (
        np.uint64(base)
        + gx * np.uint64(0x9E3779B97F4A7C15)
        + gy * np.uint64(0xC2B2AE3D27D4EB4F)
        + np.uint64(channel) * np.uint64(0x165667B19E3779F9)
    )
    lattice = ((_splitmix64(keys) >> np.uint64(24)) & np.uint64(0xFF)).astype(np.float64)

    xs = np.arange(width)
    ys = np.arange(height)
    x0 = xs // _CELL
    y0 = ys // _CELL
    tx = ((xs % _CELL) / _CELL)[None, :]
    ty = ((ys % _CELL) / _CELL)[:, None]
    p00 = lattice[y0][:, x0]
    p01 = lattice[y0][:, x0 + 1]
    p10 = lattice[y0 + 1][:, x0]
    p11 = lattice[y0 + 1][:, x0 + 1]
    a = (1.0 - tx) * p00 + tx * p01
    b = (1.0 - tx) * p10 + tx * p11
    return np.floor((1.0 - ty) * a + ty * b + 0.5).astype(np.uint8)


class MockBackend(Backend):
    name = "mock"

    def _generate(self, req: BackendRequest, progress_sink) -> BackendResult:
        prompt_key = fnv1a64(req.final_prompt.encode("utf-8"))
        tint = np.array(
            [(prompt_key >> 8 * c) & 0xFF for c in range(3)], dtype=np.float64
        )

        edge = None
        edge_weight = 0.0
        for unit in req.control_images:
            if unit.kind == ControlKind.EDGE:
                edge = unit.image.to_array()
                edge_weight = unit.weight

        init = None
        if req.init_image is not None:
            if (req.init_image.width, req.init_image.height) != (req.width, req.height):
                raise ValueError("init image dimensions differ from request")
            init = req.init_image.to_array()

        images = []
        total = req.batch_size * req.steps
        for i in range(req.batch_size):
            base = fnv1a64(
                json.dumps(
                    [req.seed, prompt_key, req.width, req.height, i],
                    separators=(",", ":"),
                ).encode()
            )
            rgb = np.empty((req.height, req.width, 3), dtype=np.float64)
            for c in range(3):
                rgb[:, :, c] = _noise_channel(base, c, req.width, req.height)
            gen = np.floor(0.75 * rgb + 0.25 * tint[None, None, :] + 0.5)

            if edge is not None and edge_weight > 0.0:
                opacity = min(edge_weight, 2.0) / 2.0
                on = edge == 255
                for c in range(3):
                    ch = gen[:, :, c]
                    ch[on] = np.floor(ch[on] + opacity * (255.0 - ch[on]) + 0.5)

            out = np.full((req.height, req.width, 4), 255, dtype=np.uint8)
            out[:, :, :3] = gen.astype(np.uint8)

            if init is not None and req.mode in (JobMode.IMAGE_TO_IMAGE, JobMode.INPAINT):
                s = req.denoising_strength
                blended = np.floor(
                    (1.0 - s) * init.astype(np.float64) + s * out.astype(np.float64) + 0.5
                ).astype(np.uint8)
                if req.mode == JobMode.INPAINT and req.mask_alpha is not None:
                    out = kernels.composite_u8(init, blended, req.mask_alpha.to_array())
                else:
                    out = blended

            images.append(RasterImage.from_array(out))
            for s in range(1, req.steps + 1):
                progress_sink((i * req.steps + s) / total)

        info = json.dumps({"backend": "mock", "seed": req.seed}, sort_keys=True)
        return BackendResult(images=tuple(images), info=info)
