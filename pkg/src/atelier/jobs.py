"""Render-job domain model.

Parameter validation collects every violation in one pass, style tokens are
appended to prompts in the webui LoRA grammar, and the job lifecycle is a
small state machine whose snapshots are immutable; persistence applies them
under compare-and-set, so this module stays concurrency-agnostic.
"""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field
from enum import Enum

from .control import DimensionMismatch, MaskSpec

SEED_RANDOMIZE = -1
SEED_MAX = 2**63 - 1

# wire name -> display name used by the webui protocol
SAMPLERS = {
    "euler_a": "Euler a",
    "euler": "Euler",
    "heun": "Heun",
    "lms": "LMS",
    "dpmpp_2m": "DPM++ 2M",
    "ddim": "DDIM",
}

DEFAULT_STEPS = 20
DEFAULT_CFG = 7.0
DEFAULT_SAMPLER = "euler_a"
DEFAULT_DENOISING = 0.75
DEFAULT_BATCH = 1

# fields an inpaint request may override; geometry and mode are pinned to
# the parent so the mask stays aligned with the init image
INPAINT_OVERRIDABLE = frozenset(
    {"prompt", "negative_prompt", "seed", "steps", "cfg_scale", "sampler",
     "denoising_strength", "batch_size", "styles"}
)


class JobMode(Enum):
    TEXT_TO_IMAGE = "txt2img"
    IMAGE_TO_IMAGE = "img2img"
    INPAINT = "inpaint"


class JobState(Enum):
    QUEUED = "queued"
    PREPROCESSING = "preprocessing"
    DISPATCHED = "dispatched"
    SAMPLING = "sampling"
    COMPLETED = "completed"
    FAILED = "failed"
    CANCELED = "canceled"


TERMINAL_STATES = frozenset({JobState.COMPLETED, JobState.FAILED, JobState.CANCELED})


class ControlKind(Enum):
    EDGE = "edge"
    DEPTH = "depth"


class ValidationFailed(ValueError):
    """Carries every violation found, as (field, message) pairs."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{f}: {m}" for f, m in self.errors))


class UnknownStyle(ValueError):
    pass


class InvalidTransition(Exception):
    def __init__(self, state, event):
        self.state = state
        self.event = event
        super().__init__(f"event {type(event).__name__} not legal in state {state.value}")


class ParentNotCompleted(ValueError):
    pass


@dataclass(frozen=True)
class ControlUnit:
    kind: ControlKind
    weight: float = 1.0
    guidance_start: float = 0.0
    guidance_end: float = 1.0
    image_ref: str | None = None  # filled in during preprocessing


@dataclass(frozen=True)
class StyleRef:
    name: str
    weight: float = 1.0


@dataclass(frozen=True)
class GenerationParams:
    """One job's generation settings.

    Defaultable fields may be None until validate_params fills them; a
    validated params value has no Nones outside init_ref/mask_ref.
    """

    prompt: str
    width: int
    height: int
    negative_prompt: str = ""
    seed: int = SEED_RANDOMIZE
    steps: int | None = None
    cfg_scale: float | None = None
    sampler: str | None = None
    mode: JobMode = JobMode.TEXT_TO_IMAGE
    denoising_strength: float | None = None
    batch_size: int | None = None
    control_units: tuple[ControlUnit, ...] = ()
    styles: tuple[StyleRef, ...] = ()
    init_ref: str | None = None
    mask_ref: str | None = None


def validate_params(p: GenerationParams, registry) -> GenerationParams:
    """Fill defaults and check every bound; raises ValidationFailed with the
    complete violation list rather than stopping at the first.

    registry is anything supporting `name in registry` for style names.
    """
    errors = []
    filled = {
        "steps": DEFAULT_STEPS if p.steps is None else p.steps,
        "cfg_scale": DEFAULT_CFG if p.cfg_scale is None else p.cfg_scale,
        "sampler": DEFAULT_SAMPLER if p.sampler is None else p.sampler,
        "denoising_strength": (
            DEFAULT_DENOISING if p.denoising_strength is None else p.denoising_strength
        ),
        "batch_size": DEFAULT_BATCH if p.batch_size is None else p.batch_size,
    }

    if not isinstance(filled["steps"], int) or not 1 <= filled["steps"] <= 150:
        errors.append(("steps", "steps out of range"))
    if not 1.0 <= filled["cfg_scale"] <= 30.0:
        errors.append(("cfg_scale", "cfg_scale out of range"))
    if filled["sampler"] not in SAMPLERS:
        errors.append(("sampler", f"unknown sampler {filled['sampler']!r}"))
    if not 0.0 <= filled["denoising_strength"] <= 1.0:
        errors.append(("denoising_strength", "denoising_strength out of range"))
    if not isinstance(filled["batch_size"], int) or not 1 <= filled["batch_size"] <= 8:
        errors.append(("batch_size", "batch_size out of range"))

    for name in ("width", "height"):
        v = getattr(p, name)
        if not isinstance(v, int) or not 64 <= v <= 2048:
            errors.append((name, f"{name} out of range"))
        elif v % 8 != 0:
            errors.append((name, f"{name} must be multiple of 8"))
    if not isinstance(p.seed, int) or not SEED_RANDOMIZE <= p.seed <= SEED_MAX:
        errors.append(("seed", "seed out of range"))

    if p.mode in (JobMode.IMAGE_TO_IMAGE, JobMode.INPAINT) and not p.init_ref:
        errors.append(("init_ref", f"init_ref required for {p.mode.value}"))
    if p.mode == JobMode.INPAINT and not p.mask_ref:
        errors.append(("mask_ref", "mask_ref required for inpaint"))

    seen_kinds = set()
    for i, u in enumerate(p.control_units):
        where = f"control_units[{i}]"
        if u.kind in seen_kinds:
            errors.append((where, f"duplicate control kind {u.kind.value}"))
        seen_kinds.add(u.kind)
        if not 0.0 <= u.weight <= 2.0:
            errors.append((where, "weight out of range"))
        if not (0.0 <= u.guidance_start <= 1.0 and 0.0 <= u.guidance_end <= 1.0):
            errors.append((where, "guidance bounds out of range"))
        elif u.guidance_start > u.guidance_end:
            errors.append((where, "guidance_start exceeds guidance_end"))

    for i, s in enumerate(p.styles):
        where = f"styles[{i}]"
        if s.name not in registry:
            errors.append((where, f"unknown style {s.name!r}"))
        if not 0.0 <= s.weight <= 2.0:
            errors.append((where, "weight out of range"))

    if errors:
        raise ValidationFailed(errors)
    return dataclasses.replace(p, **filled)


def _fmt_weight(w: float) -> str:
    """Shortest decimal form: 1.0 renders as "1", 0.8 stays "0.8"."""
    s = str(float(w))
    if "." in s and "e" not in s:
        s = s.rstrip("0").rstrip(".")
    return s


def format_prompt_with_styles(prompt: str, styles, registry) -> str:
    """Append one "<lora:name:weight>" token per style, space-separated."""
    parts = [prompt]
    for s in styles:
        if s.name not in registry:
            raise UnknownStyle(s.name)
        parts.append(f"<lora:{s.name}:{_fmt_weight(s.weight)}>")
    return " ".join(parts)


# ---------------------------------------------------------------------------
# lifecycle events

@dataclass(frozen=True)
class StartPreprocess:
    pass


@dataclass(frozen=True)
class Dispatch:
    seed: int | None = None  # concrete seed when the job asked to randomize


@dataclass(frozen=True)
class SamplingStarted:
    pass


@dataclass(frozen=True)
class Progress:
    fraction: float


@dataclass(frozen=True)
class Complete:
    result_refs: tuple[str, ...]


@dataclass(frozen=True)
class Fail:
    message: str


@dataclass(frozen=True)
class Cancel:
    pass


# progress while still Sampling is capped just below 1; only Complete may
# set 1.0, keeping "progress == 1 iff Completed" true at every snapshot
SAMPLING_PROGRESS_CAP = 0.99


@dataclass(frozen=True)
class RenderJob:
    """Immutable job snapshot; transition() produces the next version."""

    id: str
    capture_ref: str
    params: GenerationParams
    state: JobState = JobState.QUEUED
    progress: float = 0.0
    result_refs: tuple[str, ...] = ()
    error: str | None = None
    created: float = 0.0
    updated: float = 0.0
    parent_job: str | None = None


def transition(job: RenderJob, event, now: float | None = None) -> RenderJob:
    """Apply one lifecycle event, returning the successor snapshot.

    Legal spine: Queued -> Preprocessing -> Dispatched -> Sampling ->
    Completed. Fail and Cancel are accepted from any non-terminal state;
    Progress only while Sampling, clamped so it never decreases.
    """
    if now is None:
        now = time.time()
    if job.state in TERMINAL_STATES:
        raise InvalidTransition(job.state, event)

    def step(**changes):
        return dataclasses.replace(job, updated=now, **changes)

    if isinstance(event, Cancel):
        return step(state=JobState.CANCELED)
    if isinstance(event, Fail):
        return step(state=JobState.FAILED, error=event.message)
    if isinstance(event, StartPreprocess) and job.state == JobState.QUEUED:
        return step(state=JobState.PREPROCESSING)
    if isinstance(event, Dispatch) and job.state == JobState.PREPROCESSING:
        params = job.params
        if params.seed == SEED_RANDOMIZE and event.seed is not None:
            params = dataclasses.replace(params, seed=event.seed)
        return step(state=JobState.DISPATCHED, params=params)
    if isinstance(event, SamplingStarted) and job.state == JobState.DISPATCHED:
        return step(state=JobState.SAMPLING)
    if isinstance(event, Progress) and job.state == JobState.SAMPLING:
        f = min(max(event.fraction, 0.0), SAMPLING_PROGRESS_CAP)
        return step(progress=max(job.progress, f))
    if isinstance(event, Complete) and job.state == JobState.SAMPLING:
        if not event.result_refs:
            raise InvalidTransition(job.state, event)
        return step(
            state=JobState.COMPLETED, progress=1.0, result_refs=tuple(event.result_refs)
        )
    raise InvalidTransition(job.state, event)


def derive_inpaint_job(
    parent: RenderJob,
    result_index: int,
    mask: MaskSpec,
    mask_ref: str,
    new_prompt: str | None = None,
    overrides: dict | None = None,
    job_id: str | None = None,
    now: float | None = None,
) -> RenderJob:
    """Build a Queued inpaint job over one result of a completed parent.

    The chosen result becomes the init image, the mask (already stored under
    mask_ref) selects the pixels to regenerate, and every parameter not
    overridden is inherited, seed included.
    """
    if parent.state != JobState.COMPLETED:
        raise ParentNotCompleted(f"parent {parent.id} is {parent.state.value}")
    if not 0 <= result_index < len(parent.result_refs):
        raise IndexError(f"result index {result_index} out of range")
    if (mask.mask.width, mask.mask.height) != (parent.params.width, parent.params.height):
        raise DimensionMismatch("mask dimensions differ from parent result")

    overrides = dict(overrides or {})
    if new_prompt is not None:
        overrides["prompt"] = new_prompt
    bad = sorted(set(overrides) - INPAINT_OVERRIDABLE)
    if bad:
        raise ValidationFailed([(k, "not overridable for inpaint") for k in bad])

    params = dataclasses.replace(
        parent.params,
        mode=JobMode.INPAINT,
        init_ref=f"result:{parent.id}:{result_index}",
        mask_ref=mask_ref,
        **overrides,
    )
    if now is None:
        now = time.time()
    return RenderJob(
        id=job_id or new_job_id(),
        capture_ref=parent.capture_ref,
        params=params,
        created=now,
        updated=now,
        parent_job=parent.id,
    )


def new_job_id() -> str:
    import secrets

    return f"{int(time.time() * 1000):013x}{secrets.token_hex(5)}"


# ---------------------------------------------------------------------------
# JSON round trip

def params_to_dict(p: GenerationParams) -> dict:
    return {
        "prompt": p.prompt,
        "negative_prompt": p.negative_prompt,
        "seed": p.seed,
        "steps": p.steps,
        "cfg_scale": p.cfg_scale,
        "sampler": p.sampler,
        "width": p.width,
        "height": p.height,
        "mode": p.mode.value,
        "denoising_strength": p.denoising_strength,
        "batch_size": p.batch_size,
        "control_units": [
            {
                "kind": u.kind.value,
                "weight": u.weight,
                "guidance_start": u.guidance_start,
                "guidance_end": u.guidance_end,
                "image_ref": u.image_ref,
            }
            for u in p.control_units
        ],
        "styles": [{"name": s.name, "weight": s.weight} for s in p.styles],
        "init_ref": p.init_ref,
        "mask_ref": p.mask_ref,
    }


def params_from_dict(d: dict) -> GenerationParams:
    return GenerationParams(
        prompt=d["prompt"],
        width=d["width"],
        height=d["height"],
        negative_prompt=d.get("negative_prompt", ""),
        seed=d.get("seed", SEED_RANDOMIZE),
        steps=d.get("steps"),
        cfg_scale=d.get("cfg_scale"),
        sampler=d.get("sampler"),
        mode=JobMode(d.get("mode", "txt2img")),
        denoising_strength=d.get("denoising_strength"),
        batch_size=d.get("batch_size"),
        control_units=tuple(
            ControlUnit(
                kind=ControlKind(u["kind"]),
                weight=u.get("weight", 1.0),
                guidance_start=u.get("guidance_start", 0.0),
                guidance_end=u.get("guidance_end", 1.0),
                image_ref=u.get("image_ref"),
            )
            for u in d.get("control_units", ())
        ),
        styles=tuple(
            StyleRef(name=s["name"], weight=s.get("weight", 1.0))
            for s in d.get("styles", ())
        ),
        init_ref=d.get("init_ref"),
        mask_ref=d.get("mask_ref"),
    )


def job_to_dict(job: RenderJob) -> dict:
    return {
        "id": job.id,
        "capture_ref": job.capture_ref,
        "params": params_to_dict(job.params),
        "state": job.state.value,
        "progress": job.progress,
        "result_refs": list(job.result_refs),
        "error": job.error,
        "created": job.created,
        "updated": job.updated,
        "parent_job": job.parent_job,
    }


def job_from_dict(d: dict) -> RenderJob:
    return RenderJob(
        id=d["id"],
        capture_ref=d["capture_ref"],
        params=params_from_dict(d["params"]),
        state=JobState(d["state"]),
        progress=d["progress"],
        result_refs=tuple(d["result_refs"]),
        error=d.get("error"),
        created=d["created"],
        updated=d["updated"],
        parent_job=d.get("parent_job"),
    )
