"""Client for the stable-diffusion-webui REST protocol.

Payloads are serialized canonically (keys sorted, no insignificant
whitespace) so byte-level golden fixtures stay meaningful. Control images
go under alwayson_scripts.controlnet.args with module "none": preprocessing
happens on our side, making results independent of the server's bundled
preprocessors. Progress comes from polling; the protocol has no push
channel.
"""

from __future__ import annotations

import base64
import binascii
import json
import threading

import httpx

from .. import png
from ..jobs import SAMPLERS, ControlKind, JobMode
from . import (
    Backend,
    BackendRejected,
    BackendRequest,
    BackendResult,
    BackendUnavailable,
    MalformedResponse,
    Timeout,
)

DEFAULT_CONTROL_MODELS = {
    ControlKind.EDGE: "control_v11p_sd15_canny",
    ControlKind.DEPTH: "control_v11f1p_sd15_depth",
}

TXT2IMG_PATH = "/sdapi/v1/txt2img"
IMG2IMG_PATH = "/sdapi/v1/img2img"
PROGRESS_PATH = "/sdapi/v1/progress"


def _b64_png(img) -> str:
    return base64.b64encode(png.encode_png(img)).decode("ascii")


def build_payload(req: BackendRequest, control_models=None) -> bytes:
    """Canonical JSON body for the txt2img/img2img endpoint."""
    models = control_models or DEFAULT_CONTROL_MODELS
    doc = {
        "prompt": req.final_prompt,
        "negative_prompt": req.negative_prompt,
        "seed": req.seed,
        "steps": req.steps,
        "cfg_scale": req.cfg_scale,
        "sampler_name": SAMPLERS[req.sampler],
        "width": req.width,
        "height": req.height,
        "batch_size": req.batch_size,
    }
    if req.mode in (JobMode.IMAGE_TO_IMAGE, JobMode.INPAINT):
        doc["init_images"] = [_b64_png(req.init_image)]
        doc["denoising_strength"] = req.denoising_strength
    if req.mode == JobMode.INPAINT:
        doc["mask"] = _b64_png(req.mask_alpha.to_raster())
        doc["inpainting_fill"] = 1
        doc["inpaint_full_res"] = False
    if req.control_images:
        doc["alwayson_scripts"] = {
            "controlnet": {
                "args": [
                    {
                        "input_image": _b64_png(u.image.to_raster()),
                        "module": "none",
                        "model": models[u.kind],
                        "weight": u.weight,
                        "guidance_start": u.guidance_start,
                        "guidance_end": u.guidance_end,
                    }
                    for u in req.control_images
                ]
            }
        }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")


def endpoint_path(mode: JobMode) -> str:
    return TXT2IMG_PATH if mode == JobMode.TEXT_TO_IMAGE else IMG2IMG_PATH


def parse_response(doc) -> BackendResult:
    """Decode a 200 body: base64 PNGs in "images", metadata in "info"."""
    if isinstance(doc, (bytes, str)):
        try:
            doc = json.loads(doc)
        except ValueError as e:
            raise MalformedResponse(f"body is not JSON: {e}") from None
    if not isinstance(doc, dict) or not isinstance(doc.get("images"), list):
        raise MalformedResponse("missing images list")
    if not doc["images"]:
        raise MalformedResponse("empty images list in a success response")
    images = []
    for i, b64 in enumerate(doc["images"]):
        try:
            raw = base64.b64decode(b64, validate=True)
        except (binascii.Error, TypeError) as e:
            raise MalformedResponse(f"images[{i}]: invalid base64: {e}") from None
        images.append(png.decode_png(raw))
    return BackendResult(images=tuple(images), info=str(doc.get("info", "")))


def parse_progress(doc) -> float:
    try:
        return min(1.0, max(0.0, float(doc["progress"])))
    except (KeyError, TypeError, ValueError) as e:
        raise MalformedResponse(f"bad progress body: {e}") from None


class A1111Backend(Backend):
    name = "a1111"

    def __init__(
        self,
        base_url: str,
        timeout: float = 120.0,
        poll_interval: float = 0.5,
        control_models=None,
        http: httpx.Client | None = None,
    ):
        super().__init__()
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.poll_interval = poll_interval
        self.control_models = control_models or DEFAULT_CONTROL_MODELS
        self._http = http or httpx.Client(timeout=timeout)

    def health(self) -> bool:
        try:
            r = self._http.get(self.base_url + PROGRESS_PATH, timeout=5.0)
            return r.status_code == 200
        except httpx.HTTPError:
            return False

    def poll_progress(self) -> float:
        try:
            r = self._http.get(self.base_url + PROGRESS_PATH)
        except httpx.TimeoutException as e:
            raise Timeout(str(e)) from None
        except httpx.TransportError as e:
            raise BackendUnavailable(str(e)) from None
        if r.status_code != 200:
            raise BackendUnavailable(f"progress endpoint returned {r.status_code}")
        return parse_progress(r.json())

    def _generate(self, req: BackendRequest, progress_sink) -> BackendResult:
        payload = build_payload(req, self.control_models)
        url = self.base_url + endpoint_path(req.mode)

        done = threading.Event()

        def poller():
            # feed coarse progress while the POST blocks; errors here are
            # non-fatal, the POST result is authoritative
            while not done.wait(self.poll_interval):
                try:
                    progress_sink(self.poll_progress())
                except Exception:
                    pass

        thread = threading.Thread(target=poller, daemon=True)
        thread.start()
        try:
            r = self._http.post(
                url, content=payload, headers={"content-type": "application/json"}
            )
        except httpx.TimeoutException as e:
            raise Timeout(str(e)) from None
        except httpx.TransportError as e:
            raise BackendUnavailable(str(e)) from None
        finally:
            done.set()
            thread.join()

        if r.status_code != 200:
            raise BackendRejected(f"{r.status_code}: {r.text[:500]}")
        result = parse_response(r.content)
        progress_sink(1.0)
        return result
