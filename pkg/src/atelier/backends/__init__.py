"""Diffusion backend contract.

A backend turns one BackendRequest into images, reporting progress through a
callback. Two implementations ship: a deterministic procedural mock for
tests and offline work, and a client for the stable-diffusion-webui REST
protocol. GPU servers process one generation at a time, so every backend
instance serializes its generate calls; the mock follows the same
discipline for behavioral parity.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

from ..jobs import ControlKind, JobMode
from ..raster import GrayImage, RasterImage


class BackendUnavailable(Exception):
    """Endpoint unreachable (connection refused, DNS failure, ...)."""


class BackendRejected(Exception):
    """Backend answered but refused the payload."""


class Timeout(Exception):
    """Generation exceeded the configured deadline."""


class MalformedResponse(ValueError):
    """Response body did not match the protocol."""


@dataclass(frozen=True)
class ControlImage:
    kind: ControlKind
    image: GrayImage
    weight: float = 1.0
    guidance_start: float = 0.0
    guidance_end: float = 1.0


@dataclass(frozen=True)
class BackendRequest:
    """Fully resolved generation order: style tokens already folded into
    final_prompt, seed concrete, control maps rendered at target size."""

    final_prompt: str
    negative_prompt: str
    seed: int
    steps: int
    cfg_scale: float
    sampler: str
    width: int
    height: int
    mode: JobMode = JobMode.TEXT_TO_IMAGE
    denoising_strength: float = 0.75
    batch_size: int = 1
    init_image: RasterImage | None = None
    mask_alpha: GrayImage | None = None
    control_images: tuple[ControlImage, ...] = ()


@dataclass(frozen=True)
class BackendResult:
    images: tuple[RasterImage, ...]
    info: str = ""


class Backend:
    """Base class enforcing one in-flight generation per instance."""

    name = "abstract"

    def __init__(self):
        self._serial = threading.Lock()

    def generate(self, req: BackendRequest, progress=None) -> BackendResult:
        """Run one generation; progress (if given) receives non-decreasing
        fractions and is called with 1.0 before a successful return."""
        sink = progress if progress is not None else (lambda fraction: None)
        with self._serial:
            return self._generate(req, sink)

    def _generate(self, req: BackendRequest, progress_sink) -> BackendResult:
        raise NotImplementedError

    def health(self) -> bool:
        """Cheap reachability probe; mock is always healthy."""
        return True
