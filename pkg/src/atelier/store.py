"""Plain-directory project persistence.

Layout under the store root:

    captures/<id>.png          color capture (also derived control/mask images)
    captures/<id>.depth.png    16-bit depth buffer, optional
    captures/<id>.meta.json    dimensions, kind, near/far scale
    jobs/<id>.json             job snapshot wrapped with a revision counter
    results/<job>/<n>.png      generated images
    styles.json                user-editable style registry

Job updates are atomic (temp file + rename) and guarded by compare-and-set
on the revision, which is enough coordination for one service process.
Sharing a store root between processes is unsupported.
"""

from __future__ import annotations

import json
import os
import re
import secrets
import threading
import time
from dataclasses import dataclass

from . import png
from .control import DepthBuffer, DimensionMismatch
from .jobs import JobState, RenderJob, job_from_dict, job_to_dict

_TOKEN_RE = re.compile(r"^[A-Za-z0-9_-]+$")


class RevisionConflict(Exception):
    """Stored revision did not match the caller's expectation."""


class MissingDepthMeta(ValueError):
    pass


class MalformedRegistry(ValueError):
    pass


class DuplicateStyle(ValueError):
    pass


class UnknownCapture(KeyError):
    pass


class UnknownJob(KeyError):
    pass


class UnknownResult(KeyError):
    pass


@dataclass(frozen=True)
class StyleEntry:
    name: str
    display_name: str = ""
    default_weight: float = 1.0
    description: str = ""


class StyleRegistry:
    """Validated style list; supports `name in registry`."""

    def __init__(self, entries):
        self.entries = list(entries)
        self._by_name = {e.name: e for e in self.entries}

    def __contains__(self, name):
        return name in self._by_name

    def __iter__(self):
        return iter(self.entries)

    def get(self, name) -> StyleEntry:
        return self._by_name[name]


def _new_id() -> str:
    return f"{int(time.time() * 1000):013x}{secrets.token_hex(5)}"


def _check_id(value: str, exc):
    # ids appear in URLs and become file names; refuse anything path-like
    if not isinstance(value, str) or not _TOKEN_RE.match(value):
        raise exc(value)


class ProjectStore:
    def __init__(self, root):
        self.root = str(root)
        for sub in ("captures", "jobs", "results"):
            os.makedirs(os.path.join(self.root, sub), exist_ok=True)
        self._lock = threading.Lock()
        self._job_locks: dict[str, threading.Lock] = {}
        # test hook: the commit step of an atomic write, patched to inject
        # a crash between temp-write and rename
        self._replace = os.replace

    def _job_lock(self, job_id: str) -> threading.Lock:
        with self._lock:
            return self._job_locks.setdefault(job_id, threading.Lock())

    def _write_atomic(self, path: str, data: bytes):
        tmp = f"{path}.{secrets.token_hex(4)}.tmp"
        with open(tmp, "wb") as f:
            f.write(data)
        try:
            self._replace(tmp, path)
        except BaseException:
            try:
                os.unlink(tmp)
            except OSError:
                pass
            raise

    # -- captures ----------------------------------------------------------

    def put_capture(
        self,
        color: bytes,
        depth: bytes | None = None,
        meta: dict | None = None,
        kind: str = "capture",
    ) -> str:
        """Store a color PNG (plus optional 16-bit depth) and return its id."""
        img = png.decode_png(color)
        entry = {
            "v": 1,
            "kind": kind,
            "width": img.width,
            "height": img.height,
            "created": time.time(),
        }
        if depth is not None:
            if meta is None or "near" not in meta or "far" not in meta:
                raise MissingDepthMeta("depth requires near/far in meta")
            near, far = float(meta["near"]), float(meta["far"])
            if not 0.0 < near < far:
                raise MissingDepthMeta("need 0 < near < far")
            dimg = png.decode_png(depth)
            if (dimg.width, dimg.height) != (img.width, img.height):
                raise DimensionMismatch("depth dimensions differ from color")
            # decodes the buffer once up front so malformed depth is rejected here
            DepthBuffer.from_png16(depth, near, far)
            entry["near"], entry["far"] = near, far

        cid = _new_id()
        base = os.path.join(self.root, "captures", cid)
        self._write_atomic(base + ".png", color)
        if depth is not None:
            self._write_atomic(base + ".depth.png", depth)
        self._write_atomic(
            base + ".meta.json", json.dumps(entry, sort_keys=True).encode()
        )
        return cid

    def _capture_base(self, capture_id: str) -> str:
        _check_id(capture_id, UnknownCapture)
        base = os.path.join(self.root, "captures", capture_id)
        if not os.path.exists(base + ".png"):
            raise UnknownCapture(capture_id)
        return base

    def get_capture(self, capture_id: str) -> bytes:
        with open(self._capture_base(capture_id) + ".png", "rb") as f:
            return f.read()

    def get_capture_meta(self, capture_id: str) -> dict:
        with open(self._capture_base(capture_id) + ".meta.json", "rb") as f:
            return json.load(f)

    def get_capture_depth(self, capture_id: str) -> DepthBuffer | None:
        base = self._capture_base(capture_id)
        if not os.path.exists(base + ".depth.png"):
            return None
        meta = self.get_capture_meta(capture_id)
        with open(base + ".depth.png", "rb") as f:
            return DepthBuffer.from_png16(f.read(), meta["near"], meta["far"])

    def list_captures(self, kind: str | None = "capture") -> list[dict]:
        out = []
        cdir = os.path.join(self.root, "captures")
        for name in os.listdir(cdir):
            if not name.endswith(".meta.json"):
                continue
            cid = name[: -len(".meta.json")]
            with open(os.path.join(cdir, name), "rb") as f:
                meta = json.load(f)
            if kind is not None and meta.get("kind") != kind:
                continue
            out.append(
                {
                    "id": cid,
                    "width": meta["width"],
                    "height": meta["height"],
                    "kind": meta.get("kind", "capture"),
                    "has_depth": os.path.exists(os.path.join(cdir, cid + ".depth.png")),
                    "created": meta.get("created", 0.0),
                }
            )
        out.sort(key=lambda c: (c["created"], c["id"]))
        return out

    # -- jobs --------------------------------------------------------------

    def _job_path(self, job_id: str) -> str:
        _check_id(job_id, UnknownJob)
        return os.path.join(self.root, "jobs", job_id + ".json")

    def save_job(self, job: RenderJob, expected_revision: int) -> int:
        """Compare-and-set write; expected_revision 0 means "must not exist"."""
        path = self._job_path(job.id)
        with self._job_lock(job.id):
            current = 0
            if os.path.exists(path):
                with open(path, "rb") as f:
                    current = json.load(f)["revision"]
            if current != expected_revision:
                raise RevisionConflict(
                    f"job {job.id}: stored revision {current}, expected {expected_revision}"
                )
            revision = expected_revision + 1
            doc = {"v": 1, "revision": revision, "job": job_to_dict(job)}
            self._write_atomic(path, json.dumps(doc, sort_keys=True).encode())
            return revision

    def load_job(self, job_id: str) -> tuple[RenderJob, int]:
        path = self._job_path(job_id)
        try:
            with open(path, "rb") as f:
                doc = json.load(f)
        except FileNotFoundError:
            raise UnknownJob(job_id) from None
        return job_from_dict(doc["job"]), doc["revision"]

    def list_jobs(self, state: JobState | None = None) -> list[RenderJob]:
        jdir = os.path.join(self.root, "jobs")
        out = []
        for name in os.listdir(jdir):
            if not name.endswith(".json") or name.endswith(".tmp"):
                continue
            job, _ = self.load_job(name[: -len(".json")])
            if state is None or job.state == state:
                out.append(job)
        out.sort(key=lambda j: (j.created, j.id))
        return out

    # -- results -----------------------------------------------------------

    def put_result(self, job_id: str, index: int, data: bytes) -> str:
        _check_id(job_id, UnknownJob)
        rdir = os.path.join(self.root, "results", job_id)
        os.makedirs(rdir, exist_ok=True)
        self._write_atomic(os.path.join(rdir, f"{index}.png"), data)
        return f"result:{job_id}:{index}"

    def get_result(self, job_id: str, index: int) -> bytes:
        _check_id(job_id, UnknownJob)
        path = os.path.join(self.root, "results", job_id, f"{int(index)}.png")
        try:
            with open(path, "rb") as f:
                return f.read()
        except FileNotFoundError:
            raise UnknownResult(f"{job_id}/{index}") from None

    def delete_results(self, job_id: str):
        _check_id(job_id, UnknownJob)
        rdir = os.path.join(self.root, "results", job_id)
        if not os.path.isdir(rdir):
            return
        for name in os.listdir(rdir):
            os.unlink(os.path.join(rdir, name))
        os.rmdir(rdir)

    def read_image_ref(self, ref: str) -> bytes:
        """Resolve a capture id or "result:<job>:<n>" reference to PNG bytes."""
        if ref.startswith("result:"):
            _, job_id, index = ref.split(":")
            return self.get_result(job_id, int(index))
        return self.get_capture(ref)

    # -- styles ------------------------------------------------------------

    def load_style_registry(self) -> StyleRegistry:
        """Parse styles.json; a missing file is an empty registry."""
        path = os.path.join(self.root, "styles.json")
        if not os.path.exists(path):
            return StyleRegistry([])
        try:
            with open(path, "rb") as f:
                doc = json.load(f)
        except (OSError, ValueError) as e:
            raise MalformedRegistry(str(e)) from None
        if not isinstance(doc, dict) or not isinstance(doc.get("styles"), list):
            raise MalformedRegistry("expected object with a styles list")
        entries = []
        seen = set()
        for raw in doc["styles"]:
            if not isinstance(raw, dict) or not isinstance(raw.get("name"), str):
                raise MalformedRegistry("style entries need a string name")
            name = raw["name"]
            if not _TOKEN_RE.match(name):
                raise MalformedRegistry(f"style name not token-safe: {name!r}")
            if name in seen:
                raise DuplicateStyle(name)
            seen.add(name)
            entries.append(
                StyleEntry(
                    name=name,
                    display_name=raw.get("display_name", name),
                    default_weight=float(raw.get("default_weight", 1.0)),
                    description=raw.get("description", ""),
                )
            )
        return StyleRegistry(entries)
