"""HTTP service: the bridge between CAD-side clients and diffusion backends.

Request handling is concurrent; actual generation is serialized through a
small dispatcher pool (default one worker, matching one GPU). All shared
state lives in the store behind compare-and-set revisions, so any handler
or worker may retry its transition after a conflict. Progress and state
changes fan out to server-sent-event subscribers per job.
"""

from __future__ import annotations

import base64
import binascii
import dataclasses
import json
import queue
import secrets
import threading
import time
from contextlib import asynccontextmanager

from fastapi import Body, FastAPI, File, Form, UploadFile
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response, StreamingResponse
from starlette.exceptions import HTTPException as StarletteHTTPException

from . import png
from .backends import BackendRequest, ControlImage
from .config import Config, make_backend
from .control import (
    DepthSettings,
    DimensionMismatch,
    MaskSpec,
    MissingDepth,
    canny_edges,
    feather_mask,
    normalize_depth,
)
from .jobs import (
    Cancel,
    Complete,
    ControlKind,
    Dispatch,
    Fail,
    GenerationParams,
    InvalidTransition,
    JobMode,
    JobState,
    ParentNotCompleted,
    Progress,
    RenderJob,
    SamplingStarted,
    StartPreprocess,
    TERMINAL_STATES,
    ValidationFailed,
    derive_inpaint_job,
    job_to_dict,
    new_job_id,
    params_from_dict,
    transition,
    validate_params,
)
from .raster import GrayImage, resize_bilinear, to_grayscale, to_rgba
from .store import (
    MissingDepthMeta,
    ProjectStore,
    RevisionConflict,
    UnknownCapture,
    UnknownJob,
    UnknownResult,
)

SSE_PROGRESS_MIN_INTERVAL = 0.25  # at most 4 progress events per second
SSE_KEEPALIVE_S = 15.0


class ApiException(Exception):
    """Carried through to the error envelope: {code, message, fields?}."""

    def __init__(self, status: int, code: str, message: str, fields: dict | None = None):
        self.status = status
        self.code = code
        self.message = message
        self.fields = fields
        super().__init__(message)


_STATUS_CODES = {
    400: "bad_request",
    404: "not_found",
    405: "method_not_allowed",
    409: "conflict",
    422: "validation_failed",
    500: "internal_error",
}


def _envelope(status: int, code: str, message: str, fields=None) -> JSONResponse:
    body = {"code": code, "message": message}
    if fields:
        body["fields"] = fields
    return JSONResponse(body, status_code=status)


class EventBus:
    """Per-job fan-out of lifecycle events to any number of subscribers."""

    def __init__(self):
        self._lock = threading.Lock()
        self._subs: dict[str, list[queue.Queue]] = {}

    def subscribe(self, job_id: str) -> queue.Queue:
        q: queue.Queue = queue.Queue()
        with self._lock:
            self._subs.setdefault(job_id, []).append(q)
        return q

    def unsubscribe(self, job_id: str, q: queue.Queue):
        with self._lock:
            subs = self._subs.get(job_id, [])
            if q in subs:
                subs.remove(q)
            if not subs:
                self._subs.pop(job_id, None)

    def publish(self, job_id: str, item: dict):
        with self._lock:
            subs = list(self._subs.get(job_id, ()))
        for q in subs:
            q.put(item)


class _Aborted(Exception):
    """Job reached a terminal state under our feet; stop working on it."""


def apply_event(store: ProjectStore, bus: EventBus, job_id: str, event, mutate=None):
    """Load-transition-save under compare-and-set, then publish.

    Retries on revision conflicts; once the stored job is terminal the
    event no longer applies and _Aborted tells the caller to back off.
    mutate, when given, adjusts the snapshot before the transition (used to
    attach control image refs at dispatch time).
    """
    while True:
        job, rev = store.load_job(job_id)
        if mutate is not None:
            job = mutate(job)
        try:
            job = transition(job, event)
        except InvalidTransition:
            raise _Aborted(job_id) from None
        try:
            new_rev = store.save_job(job, rev)
        except RevisionConflict:
            continue
        kind = "progress" if isinstance(event, Progress) else "state"
        bus.publish(job_id, {"kind": kind, "revision": new_rev, "job": job})
        return job, new_rev


def _resize_gray(g: GrayImage, width: int, height: int) -> GrayImage:
    r = resize_bilinear(g.to_raster(), width, height)
    return GrayImage(r.width, r.height, r.data)


class Dispatcher:
    """Worker pool that drains the job queue and drives backends."""

    def __init__(self, store: ProjectStore, backend, bus: EventBus, cfg: Config):
        self.store = store
        self.backend = backend
        self.bus = bus
        self.cfg = cfg
        self.queue: queue.Queue = queue.Queue()
        self._threads: list[threading.Thread] = []

    def start(self):
        for i in range(self.cfg.workers):
            t = threading.Thread(target=self._run, name=f"dispatch-{i}", daemon=True)
            t.start()
            self._threads.append(t)

    def stop(self):
        for _ in self._threads:
            self.queue.put(None)
        for t in self._threads:
            t.join(timeout=10.0)
        self._threads = []

    def enqueue(self, job_id: str):
        self.queue.put(job_id)

    def recover(self):
        """Re-enqueue jobs that were Queued when the service last stopped;
        anything caught mid-flight is failed rather than silently resumed."""
        for job in self.store.list_jobs():
            if job.state == JobState.QUEUED:
                self.enqueue(job.id)
            elif job.state not in TERMINAL_STATES:
                try:
                    apply_event(
                        self.store, self.bus, job.id, Fail("interrupted by service restart")
                    )
                except _Aborted:
                    pass

    def _run(self):
        while True:
            job_id = self.queue.get()
            if job_id is None:
                return
            try:
                self._execute(job_id)
            except Exception:
                # a worker must survive anything one job throws at it
                try:
                    self._fail(job_id, "internal dispatch error")
                except Exception:
                    pass

    def _apply(self, job_id, event, mutate=None):
        return apply_event(self.store, self.bus, job_id, event, mutate)

    def _fail(self, job_id: str, message: str):
        try:
            self._apply(job_id, Fail(message))
        except _Aborted:
            pass

    def _execute(self, job_id: str):
        try:
            job, _ = self._apply(job_id, StartPreprocess())
        except _Aborted:
            return

        try:
            params, control_images, init_image, mask_alpha = self._preprocess(job)
        except _Aborted:
            return
        except Exception as e:
            self._fail(job_id, f"preprocess failed: {e}")
            return

        seed = None
        if params.seed == -1:
            seed = secrets.randbits(63)
        try:
            job, _ = self._apply(
                job_id,
                Dispatch(seed=seed),
                mutate=lambda j: dataclasses.replace(j, params=params),
            )
            job, _ = self._apply(job_id, SamplingStarted())
        except _Aborted:
            return

        p = job.params
        req = BackendRequest(
            final_prompt=self._final_prompt(p),
            negative_prompt=p.negative_prompt,
            seed=p.seed,
            steps=p.steps,
            cfg_scale=p.cfg_scale,
            sampler=p.sampler,
            width=p.width,
            height=p.height,
            mode=p.mode,
            denoising_strength=p.denoising_strength,
            batch_size=p.batch_size,
            init_image=init_image,
            mask_alpha=mask_alpha,
            control_images=control_images,
        )

        last = 0.0

        def sink(fraction):
            nonlocal last
            if fraction < 1.0 and fraction - last < 0.01:
                return
            last = fraction
            self._apply(job_id, Progress(fraction))

        try:
            result = self.backend.generate(req, sink)
        except _Aborted:
            return
        except Exception as e:
            self._fail(job_id, f"backend: {e}")
            return

        refs = []
        for i, img in enumerate(result.images):
            refs.append(self.store.put_result(job_id, i, png.encode_png(img)))
        try:
            self._apply(job_id, Complete(tuple(refs)))
        except _Aborted:
            # canceled between sampling and completion: keep the store clean
            self.store.delete_results(job_id)

    def _final_prompt(self, p: GenerationParams) -> str:
        from .jobs import format_prompt_with_styles

        registry = self.store.load_style_registry()
        return format_prompt_with_styles(p.prompt, p.styles, registry)

    def _preprocess(self, job: RenderJob):
        """Produce control maps at generation size and load init/mask images.

        Returns updated params (control units now carry image refs) plus the
        decoded images the backend request needs.
        """
        p = job.params
        capture = png.decode_png(self.store.get_capture(job.capture_ref))
        resized = resize_bilinear(to_rgba(capture), p.width, p.height)

        units = []
        control_images = []
        for unit in p.control_units:
            # inpaint children inherit their parent's control maps; reuse
            # them when they are still the right size
            gray = None
            ref = unit.image_ref
            if ref:
                try:
                    stored = png.decode_png(self.store.read_image_ref(ref))
                    if (stored.width, stored.height) == (p.width, p.height):
                        gray = to_grayscale(stored)
                except (KeyError, ValueError):
                    gray = None
            if gray is None:
                gray = self._render_control(unit.kind, job, resized)
                ref = self.store.put_capture(
                    png.encode_png(gray.to_raster()), kind="control"
                )
            units.append(dataclasses.replace(unit, image_ref=ref))
            control_images.append(
                ControlImage(
                    kind=unit.kind,
                    image=gray,
                    weight=unit.weight,
                    guidance_start=unit.guidance_start,
                    guidance_end=unit.guidance_end,
                )
            )

        init_image = None
        if p.init_ref:
            init = png.decode_png(self.store.read_image_ref(p.init_ref))
            init_image = resize_bilinear(to_rgba(init), p.width, p.height)

        mask_alpha = None
        if p.mask_ref:
            m = to_grayscale(png.decode_png(self.store.get_capture(p.mask_ref)))
            if (m.width, m.height) != (p.width, p.height):
                raise DimensionMismatch("stored mask dimensions differ from job")
            mask_alpha = m

        params = dataclasses.replace(p, control_units=tuple(units))
        return params, tuple(control_images), init_image, mask_alpha

    def _render_control(self, kind: ControlKind, job: RenderJob, resized) -> GrayImage:
        p = job.params
        if kind == ControlKind.EDGE:
            return canny_edges(to_grayscale(resized), self.cfg.canny)
        depth = self.store.get_capture_depth(job.capture_ref)
        if depth is None:
            raise MissingDepth("capture has no depth buffer")
        gray = normalize_depth(depth, DepthSettings().clip_percentile)
        return _resize_gray(gray, p.width, p.height)


# ---------------------------------------------------------------------------
# request/response helpers

def _job_summary(job: RenderJob, include_params: bool = False) -> dict:
    doc = {
        "job_id": job.id,
        "capture_id": job.capture_ref,
        "state": job.state.value,
        "progress": job.progress,
        "result_count": len(job.result_refs),
        "error": job.error,
        "parent_job": job.parent_job,
        "created": job.created,
        "updated": job.updated,
    }
    if job.state == JobState.COMPLETED:
        doc["results"] = [
            f"/api/v1/jobs/{job.id}/results/{i}" for i in range(len(job.result_refs))
        ]
    if include_params:
        doc["params"] = job_to_dict(job)["params"]
    return doc


def _sse(event: str, payload: dict) -> str:
    return f"event: {event}\ndata: {json.dumps(payload, sort_keys=True)}\n\n"


def _state_payload(job: RenderJob, revision: int) -> dict:
    d = _job_summary(job)
    d["revision"] = revision
    return d


def create_app(
    cfg: Config | None = None,
    store: ProjectStore | None = None,
    backend=None,
) -> FastAPI:
    """Build the service; store and backend are injectable for tests."""
    cfg = cfg or Config()
    store = store or ProjectStore(cfg.store_root)
    backend = backend or make_backend(cfg)
    bus = EventBus()
    dispatcher = Dispatcher(store, backend, bus, cfg)

    @asynccontextmanager
    async def lifespan(app):
        dispatcher.recover()
        dispatcher.start()
        yield
        dispatcher.stop()

    app = FastAPI(title="atelier", lifespan=lifespan)
    app.state.store = store
    app.state.backend = backend
    app.state.bus = bus
    app.state.dispatcher = dispatcher

    if cfg.cors_origins:
        app.add_middleware(
            CORSMiddleware,
            allow_origins=list(cfg.cors_origins),
            allow_methods=["*"],
            allow_headers=["*"],
        )

    @app.exception_handler(ApiException)
    async def _api_exc(request, exc: ApiException):
        return _envelope(exc.status, exc.code, exc.message, exc.fields)

    @app.exception_handler(StarletteHTTPException)
    async def _http_exc(request, exc: StarletteHTTPException):
        code = _STATUS_CODES.get(exc.status_code, "error")
        return _envelope(exc.status_code, code, str(exc.detail))

    @app.exception_handler(RequestValidationError)
    async def _req_exc(request, exc: RequestValidationError):
        fields = {}
        for err in exc.errors():
            loc = ".".join(str(p) for p in err.get("loc", ()) if p != "body")
            fields[loc or "body"] = err.get("msg", "invalid")
        return _envelope(422, "validation_failed", "invalid request", fields)

    @app.exception_handler(Exception)
    async def _any_exc(request, exc):
        return _envelope(500, "internal_error", "internal error")

    # -- captures ----------------------------------------------------------

    @app.post("/api/v1/captures", status_code=201)
    def post_capture(
        color: UploadFile = File(...),
        depth: UploadFile | None = File(None),
        near: float | None = Form(None),
        far: float | None = Form(None),
    ):
        color_bytes = color.file.read()
        depth_bytes = depth.file.read() if depth is not None else None
        meta = None
        if near is not None or far is not None:
            meta = {}
            if near is not None:
                meta["near"] = near
            if far is not None:
                meta["far"] = far
        try:
            cid = store.put_capture(color_bytes, depth_bytes, meta)
        except MissingDepthMeta as e:
            raise ApiException(400, "missing_depth_meta", str(e))
        except DimensionMismatch as e:
            raise ApiException(400, "dimension_mismatch", str(e))
        except ValueError as e:
            raise ApiException(400, "malformed_png", str(e))
        return {"capture_id": cid}

    @app.get("/api/v1/captures")
    def list_captures():
        return store.list_captures()

    @app.get("/api/v1/captures/{capture_id}")
    def get_capture(capture_id: str):
        try:
            data = store.get_capture(capture_id)
        except UnknownCapture:
            raise ApiException(404, "unknown_capture", f"no capture {capture_id}")
        return Response(content=data, media_type="image/png")

    @app.get("/api/v1/captures/{capture_id}/control/{kind}")
    def get_control_preview(
        capture_id: str,
        kind: str,
        width: int | None = None,
        height: int | None = None,
    ):
        """On-demand conditioning-map preview, same settings a job would use."""
        try:
            data = store.get_capture(capture_id)
        except UnknownCapture:
            raise ApiException(404, "unknown_capture", f"no capture {capture_id}")
        if kind not in ("edge", "depth"):
            raise ApiException(
                422, "validation_failed", "unknown control kind", {"kind": kind}
            )
        img = png.decode_png(data)
        w = min(img.width, 2048) if width is None else width
        h = min(img.height, 2048) if height is None else height
        if not (8 <= w <= 2048 and 8 <= h <= 2048):
            raise ApiException(
                422, "validation_failed", "preview size out of range",
                {"width": "8..2048", "height": "8..2048"},
            )
        if kind == "edge":
            gray = canny_edges(
                to_grayscale(resize_bilinear(to_rgba(img), w, h)), cfg.canny
            )
        else:
            depth = store.get_capture_depth(capture_id)
            if depth is None:
                raise ApiException(409, "missing_depth", "capture has no depth buffer")
            gray = _resize_gray(
                normalize_depth(depth, DepthSettings().clip_percentile), w, h
            )
        return Response(content=png.encode_png(gray.to_raster()), media_type="image/png")

    # -- jobs ----------------------------------------------------------------

    def _registry():
        return store.load_style_registry()

    def _parse_params(pd: dict, capture_id: str) -> GenerationParams:
        missing = [k for k in ("prompt", "width", "height") if k not in pd]
        if missing:
            raise ApiException(
                422,
                "validation_failed",
                "missing required params",
                {k: "required" for k in missing},
            )
        try:
            params = params_from_dict(pd)
        except (KeyError, TypeError, ValueError) as e:
            raise ApiException(422, "validation_failed", f"bad params: {e}")
        if params.mode != JobMode.TEXT_TO_IMAGE and params.init_ref is None:
            params = dataclasses.replace(params, init_ref=capture_id)
        try:
            return validate_params(params, _registry())
        except ValidationFailed as e:
            raise ApiException(
                422, "validation_failed", "invalid params", dict(e.errors)
            )

    @app.post("/api/v1/jobs", status_code=202)
    def post_job(payload: dict = Body(...)):
        capture_id = payload.get("capture_id")
        if not isinstance(capture_id, str):
            raise ApiException(
                422, "validation_failed", "capture_id required", {"capture_id": "required"}
            )
        try:
            store.get_capture(capture_id)
        except UnknownCapture:
            raise ApiException(404, "unknown_capture", f"no capture {capture_id}")
        pd = payload.get("params")
        if not isinstance(pd, dict):
            raise ApiException(
                422, "validation_failed", "params object required", {"params": "required"}
            )
        params = _parse_params(pd, capture_id)
        now = time.time()
        job = RenderJob(
            id=new_job_id(), capture_ref=capture_id, params=params, created=now, updated=now
        )
        store.save_job(job, 0)
        dispatcher.enqueue(job.id)
        return {"job_id": job.id}

    @app.get("/api/v1/jobs")
    def list_jobs(state: str | None = None):
        want = None
        if state is not None:
            try:
                want = JobState(state)
            except ValueError:
                raise ApiException(422, "validation_failed", f"unknown state {state!r}")
        return [_job_summary(j) for j in store.list_jobs(want)]

    def _load_job(job_id: str):
        try:
            return store.load_job(job_id)
        except UnknownJob:
            raise ApiException(404, "unknown_job", f"no job {job_id}")

    @app.get("/api/v1/jobs/{job_id}")
    def get_job(job_id: str):
        job, _ = _load_job(job_id)
        return _job_summary(job, include_params=True)

    @app.get("/api/v1/jobs/{job_id}/results/{index}")
    def get_result(job_id: str, index: int):
        job, _ = _load_job(job_id)
        if job.state != JobState.COMPLETED:
            raise ApiException(409, "not_ready", f"job is {job.state.value}")
        try:
            data = store.get_result(job_id, index)
        except UnknownResult:
            raise ApiException(404, "unknown_result", f"no result {index}")
        return Response(content=data, media_type="image/png")

    @app.post("/api/v1/jobs/{job_id}/cancel")
    def cancel_job(job_id: str):
        _load_job(job_id)
        try:
            job, _ = apply_event(store, bus, job_id, Cancel())
        except _Aborted:
            job, _ = store.load_job(job_id)
            raise ApiException(409, "already_terminal", f"job is {job.state.value}")
        return {"job_id": job_id, "state": job.state.value}

    @app.post("/api/v1/jobs/{job_id}/inpaint", status_code=202)
    def inpaint_job(job_id: str, payload: dict = Body(...)):
        parent, _ = _load_job(job_id)
        if parent.state != JobState.COMPLETED:
            raise ApiException(
                409, "parent_not_completed", f"parent is {parent.state.value}"
            )

        mask_b64 = payload.get("mask")
        if not isinstance(mask_b64, str):
            raise ApiException(
                422, "validation_failed", "mask required", {"mask": "required"}
            )
        try:
            mask_png = base64.b64decode(mask_b64, validate=True)
        except (binascii.Error, ValueError):
            raise ApiException(
                422, "validation_failed", "mask is not valid base64", {"mask": "invalid"}
            )
        try:
            mask_img = to_grayscale(png.decode_png(mask_png))
        except ValueError as e:
            raise ApiException(
                422, "validation_failed", f"mask: {e}", {"mask": "malformed png"}
            )

        result_index = payload.get("result_index", 0)
        if not isinstance(result_index, int):
            raise ApiException(
                422, "validation_failed", "result_index must be an integer",
                {"result_index": "must be an integer"},
            )
        feather_radius = payload.get("feather_radius", 0)
        try:
            spec = MaskSpec(mask_img, feather_radius)
        except (TypeError, ValueError) as e:
            raise ApiException(
                422, "validation_failed", str(e), {"feather_radius": "out of range"}
            )

        overrides = dict(payload.get("overrides") or {})
        if "styles" in overrides:
            try:
                from .jobs import StyleRef

                overrides["styles"] = tuple(
                    StyleRef(name=s["name"], weight=s.get("weight", 1.0))
                    for s in overrides["styles"]
                )
            except (KeyError, TypeError):
                raise ApiException(
                    422, "validation_failed", "bad styles override", {"overrides.styles": "invalid"}
                )

        alpha = feather_mask(spec)
        mask_ref = store.put_capture(png.encode_png(alpha.to_raster()), kind="mask")
        try:
            child = derive_inpaint_job(
                parent,
                result_index,
                spec,
                mask_ref,
                new_prompt=payload.get("prompt"),
                overrides=overrides,
            )
        except ParentNotCompleted as e:
            raise ApiException(409, "parent_not_completed", str(e))
        except IndexError as e:
            raise ApiException(
                422, "validation_failed", str(e), {"result_index": "out of range"}
            )
        except DimensionMismatch as e:
            raise ApiException(
                422, "validation_failed", str(e), {"mask": "dimension mismatch"}
            )
        except ValidationFailed as e:
            raise ApiException(422, "validation_failed", "invalid overrides", dict(e.errors))

        try:
            child = dataclasses.replace(
                child, params=validate_params(child.params, _registry())
            )
        except ValidationFailed as e:
            raise ApiException(422, "validation_failed", "invalid params", dict(e.errors))

        store.save_job(child, 0)
        dispatcher.enqueue(child.id)
        return {"job_id": child.id, "parent_job": job_id}

    # -- events ------------------------------------------------------------

    @app.get("/api/v1/jobs/{job_id}/events")
    def job_events(job_id: str):
        q = bus.subscribe(job_id)
        try:
            job, rev = store.load_job(job_id)
        except UnknownJob:
            bus.unsubscribe(job_id, q)
            raise ApiException(404, "unknown_job", f"no job {job_id}")

        def stream():
            try:
                last_rev = rev
                last_progress_at = 0.0
                yield _sse("state", _state_payload(job, rev))
                if job.state in TERMINAL_STATES:
                    return
                while True:
                    try:
                        item = q.get(timeout=SSE_KEEPALIVE_S)
                    except queue.Empty:
                        yield ": keepalive\n\n"
                        continue
                    if item["revision"] <= last_rev:
                        continue
                    last_rev = item["revision"]
                    j = item["job"]
                    if item["kind"] == "progress":
                        now = time.monotonic()
                        if now - last_progress_at < SSE_PROGRESS_MIN_INTERVAL:
                            continue
                        last_progress_at = now
                        yield _sse(
                            "progress",
                            {
                                "job_id": j.id,
                                "progress": j.progress,
                                "revision": item["revision"],
                            },
                        )
                    else:
                        yield _sse("state", _state_payload(j, item["revision"]))
                        if j.state in TERMINAL_STATES:
                            return
            finally:
                bus.unsubscribe(job_id, q)

        return StreamingResponse(stream(), media_type="text/event-stream")

    # -- styles / health ----------------------------------------------------

    @app.get("/api/v1/styles")
    def get_styles():
        reg = store.load_style_registry()
        return [
            {
                "name": e.name,
                "display_name": e.display_name,
                "default_weight": e.default_weight,
                "description": e.description,
            }
            for e in reg
        ]

    @app.get("/api/v1/healthz")
    def healthz():
        ok = backend.health()
        return {"status": "ok" if ok else "degraded", "backend": backend.name}

    return app
