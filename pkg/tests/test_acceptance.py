"""Top-level acceptance checks for the whole stack.

Each test covers one shipping criterion at its stated tolerance and prints a
single verdict line (visible with -s; pytest -v shows the same per-test line).
"""

import json
import random
import threading
import time

import numpy as np
from fastapi.testclient import TestClient

import oracles
from atelier.backends import BackendRequest
from atelier.backends.a1111 import A1111Backend
from atelier.backends.mock import MockBackend
from atelier.control import (
    CannySettings,
    DepthBuffer,
    MaskSpec,
    canny_edges,
    feather_mask,
    normalize_depth,
)
from atelier.jobs import JobMode, JobState
from atelier.png import decode_png, encode_png
from atelier.raster import GrayImage, RasterImage
from atelier.service import create_app
from atelier.store import ProjectStore

from conftest import hysteresis_fixture, step_fixture
import test_a1111 as protocol
from test_jobs import TERMINAL_STATES, drive_random_sequence


def _verdict(name, ok, detail=""):
    line = f"[{'PASS' if ok else 'FAIL'}] {name}"
    if detail:
        line += f" ({detail})"
    print(line)
    assert ok, line


def _canny_pair(arr, settings):
    got = canny_edges(GrayImage.from_array(arr), settings).to_array().tolist()
    want = oracles.canny(
        [list(r) for r in arr.tolist()],
        settings.low_threshold, settings.high_threshold, settings.sigma,
    )
    return got, want


def test_canny_oracle_equivalence():
    """50 random 32x32 images plus both fixtures, pixel-exact, under 5 s."""
    rng = np.random.default_rng(2024)
    start = time.monotonic()
    ok = True

    for _ in range(50):
        arr = rng.integers(0, 256, (32, 32), dtype=np.uint8)
        got, want = _canny_pair(arr, CannySettings())
        ok = ok and got == want

    tuned = CannySettings(low_threshold=50.0, high_threshold=100.0, sigma=1.0)
    for fixture in (step_fixture(), hysteresis_fixture()):
        for settings in (tuned, CannySettings()):
            got, want = _canny_pair(fixture, settings)
            ok = ok and got == want

    elapsed = time.monotonic() - start
    ok = ok and elapsed < 5.0
    _verdict("canny oracle equivalence", ok, f"{elapsed:.2f}s")


def test_canny_rotation_equivariance():
    """Edge detection commutes with 90-degree rotation away from the border."""
    rng = np.random.default_rng(7)
    settings = CannySettings()
    ok = True
    for _ in range(20):
        arr = rng.integers(0, 256, (32, 32), dtype=np.uint8)
        plain = canny_edges(GrayImage.from_array(arr), settings).to_array()
        rot = canny_edges(
            GrayImage.from_array(np.rot90(arr).copy()), settings
        ).to_array()
        back = np.rot90(rot, k=-1)
        ok = ok and np.array_equal(plain[2:-2, 2:-2], back[2:-2, 2:-2])
    _verdict("canny rotation equivariance", ok)


def test_depth_normalization_properties():
    """Monotone near-is-bright shading over 1000 random buffers + fixture."""
    rng = np.random.default_rng(99)
    ok = True
    for i in range(1000):
        h, w = int(rng.integers(2, 20)), int(rng.integers(2, 20))
        vals = rng.uniform(0.1, 100.0, (h, w))
        if i % 3 == 0:  # sprinkle background pixels
            vals[rng.random((h, w)) < 0.2] = np.inf
            if not np.isfinite(vals).any():
                vals[0, 0] = 1.0
        clip = 0.0 if i % 2 == 0 else 0.02
        out = normalize_depth(DepthBuffer(vals), clip).to_array()

        finite = np.isfinite(vals)
        ok = ok and (out[~finite] == 0).all()
        fv, fo = vals[finite], out[finite].astype(int)
        order = np.argsort(fv, kind="stable")
        shades = fo[order]
        ok = ok and (np.diff(shades) <= 0).all()
        if fv.min() < fv.max():
            ok = ok and shades[0] == 255 and shades[-1] == 0
    fixture = normalize_depth(DepthBuffer(np.array([[1.0, 2.0, 3.0]])), 0.02)
    ok = ok and fixture.to_array().tolist() == [[255, 128, 0]]
    _verdict("depth normalization", ok)


def test_inpaint_safety():
    """Feathered alpha-0 pixels survive the mock inpaint bit-identically."""
    rng = np.random.default_rng(4242)
    be = MockBackend()
    ok = True
    for i in range(100):
        w = h = 32
        init = RasterImage.from_array(rng.integers(0, 256, (h, w, 4), dtype=np.uint8))
        blob = (rng.random((h, w)) < 0.25).astype(np.uint8) * 255
        radius = int(rng.integers(0, 6))
        alpha = feather_mask(MaskSpec(GrayImage.from_array(blob), radius))
        req = BackendRequest(
            final_prompt=f"variant {i}", negative_prompt="",
            seed=int(rng.integers(0, 2**31)), steps=4, cfg_scale=7.0,
            sampler="euler_a", width=w, height=h, mode=JobMode.INPAINT,
            init_image=init, mask_alpha=alpha,
            denoising_strength=float(rng.uniform(0.1, 1.0)),
        )
        out = be.generate(req).images[0].to_array()
        untouched = alpha.to_array() == 0
        ok = ok and np.array_equal(out[untouched], init.to_array()[untouched])
    _verdict("inpaint alpha-0 safety", ok)


def _app(tmp_path):
    store = ProjectStore(tmp_path / "proj")
    return create_app(store=store, backend=MockBackend()), store


def _wait(client, jid, timeout=15.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        doc = client.get(f"/api/v1/jobs/{jid}").json()
        if doc["state"] in ("completed", "failed", "canceled"):
            return doc
        time.sleep(0.01)
    raise AssertionError("timeout")


def test_api_determinism(tmp_path):
    """Same params, fixed seed, twice through the whole API: identical bytes."""
    app, _ = _app(tmp_path)
    arr = np.zeros((64, 64, 4), np.uint8)
    arr[:, :, 3] = 255
    arr[16:48, 16:48, :3] = 230
    with TestClient(app) as client:
        r = client.post("/api/v1/captures", files={
            "color": ("c.png", encode_png(RasterImage.from_array(arr)), "image/png"),
        })
        cid = r.json()["capture_id"]
        body = {"capture_id": cid, "params": {
            "prompt": "a courtyard", "width": 64, "height": 64, "seed": 31337,
            "batch_size": 2, "control_units": [{"kind": "edge", "weight": 1.0}],
        }}
        docs = []
        for _ in range(2):
            jid = client.post("/api/v1/jobs", json=body).json()["job_id"]
            docs.append(_wait(client, jid))
        ok = all(d["state"] == "completed" for d in docs)
        for i in range(2):
            a = client.get(docs[0]["results"][i]).content
            b = client.get(docs[1]["results"][i]).content
            ok = ok and a == b
    _verdict("API determinism", ok)


def test_state_machine_properties():
    """10,000 random event walks: no terminal exit, monotone progress."""
    rng = random.Random(0xACCE97)
    ok = True
    for _ in range(10_000):
        trace = drive_random_sequence(rng)
        for prev, cur in zip(trace, trace[1:]):
            ok = ok and prev.state not in TERMINAL_STATES
            ok = ok and cur.progress >= prev.progress
        final = trace[-1]
        if final.state is JobState.COMPLETED:
            ok = ok and final.progress == 1.0 and bool(final.result_refs)
    _verdict("state machine invariants", ok)


def test_protocol_golden():
    """Frozen payload bytes plus a full generate against the fake server."""
    golden = protocol.TestGoldenPayloads()
    ok = True
    try:
        golden.test_txt2img()
        golden.test_img2img()
        golden.test_inpaint_with_control()
    except AssertionError:
        ok = False

    protocol._FakeWebui.behavior = "ok"
    protocol._FakeWebui.post_delay = 0.0
    protocol._FakeWebui.seen = []
    from http.server import ThreadingHTTPServer

    srv = ThreadingHTTPServer(("127.0.0.1", 0), protocol._FakeWebui)
    t = threading.Thread(target=srv.serve_forever, daemon=True)
    t.start()
    try:
        be = A1111Backend(f"http://127.0.0.1:{srv.server_port}", poll_interval=0.05)
        seen = []
        res = be.generate(protocol.simple_request(), progress=seen.append)
        ok = ok and len(res.images) == 1 and seen[-1] == 1.0
    finally:
        srv.shutdown()
        srv.server_close()
    _verdict("protocol golden fixtures + fake server", ok)


def test_end_to_end_latency(tmp_path):
    """Capture to downloaded 512x512 result through SSE in under 2 s."""
    app, _ = _app(tmp_path)
    arr = np.zeros((512, 512, 4), np.uint8)
    arr[:, :, 3] = 255
    arr[:, 256:, :3] = 255
    capture_png = encode_png(RasterImage.from_array(arr))

    with TestClient(app) as client:
        start = time.monotonic()
        r = client.post("/api/v1/captures", files={
            "color": ("c.png", capture_png, "image/png"),
        })
        cid = r.json()["capture_id"]
        body = {"capture_id": cid, "params": {
            "prompt": "a concrete pavilion", "width": 512, "height": 512,
            "seed": 1, "control_units": [{"kind": "edge"}],
        }}
        jid = client.post("/api/v1/jobs", json=body).json()["job_id"]

        final_state = None
        with client.stream("GET", f"/api/v1/jobs/{jid}/events") as stream:
            payload = None
            for line in stream.iter_lines():
                if line.startswith("data: "):
                    payload = json.loads(line[6:])
                elif line == "" and payload is not None:
                    if payload.get("state") in ("completed", "failed", "canceled"):
                        final_state = payload["state"]
                        break
                    payload = None
        result = client.get(f"/api/v1/jobs/{jid}/results/0")
        elapsed = time.monotonic() - start

    ok = final_state == "completed" and result.status_code == 200
    img = decode_png(result.content)
    ok = ok and (img.width, img.height) == (512, 512)
    ok = ok and elapsed < 2.0
    _verdict("end-to-end latency", ok, f"{elapsed:.2f}s for 512x512")


def test_crash_safety(tmp_path):
    """A write that dies before publish never corrupts the stored job."""
    from test_jobs import job

    store = ProjectStore(tmp_path / "proj")
    original = job(id="job-k")
    store.save_job(original, expected_revision=0)

    def exploding(src, dst):
        raise OSError("injected failure between temp write and rename")

    store._replace = exploding
    crashed = False
    try:
        store.save_job(job(id="job-k", state=JobState.SAMPLING), expected_revision=1)
    except OSError:
        crashed = True

    import os

    store._replace = os.replace
    loaded, rev = store.load_job("job-k")
    raw = json.loads((tmp_path / "proj" / "jobs" / "job-k.json").read_text())
    ok = crashed and loaded == original and rev == 1 and raw["revision"] == 1
    _verdict("crash safety", ok)
