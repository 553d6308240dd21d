"""Command-line interface: exit codes, preprocess outputs, live submit."""

import json
import os
import socket
import threading
import time

import httpx
import numpy as np
import pytest
from click.testing import CliRunner

from atelier import png
from atelier.cli import (
    EXIT_BAD_CONFIG,
    EXIT_BIND,
    EXIT_IMAGE,
    EXIT_JOB_FAILED,
    EXIT_UNREACHABLE,
    main,
)
from atelier.control import CannySettings, canny_edges
from atelier.raster import GrayImage, RasterImage, to_grayscale

from conftest import gray16_png, solid_png, step_fixture


@pytest.fixture
def runner():
    return CliRunner()


def write_step_png(path, w=32, h=32):
    arr = np.zeros((h, w, 4), np.uint8)
    arr[:, :, 3] = 255
    arr[:, w // 2:, :3] = 255
    data = png.encode_png(RasterImage.from_array(arr))
    path.write_bytes(data)
    return data


class TestPreprocess:
    def test_writes_edge_map_identical_to_library(self, runner, tmp_path):
        cap = tmp_path / "cap.png"
        data = write_step_png(cap)
        out = tmp_path / "maps"
        res = runner.invoke(main, [
            "preprocess", "--input", str(cap), "--out-dir", str(out),
            "--low", "50", "--high", "100", "--sigma", "1.0",
        ])
        assert res.exit_code == 0, res.output
        report = json.loads(res.output)
        assert report["canny"]["low_threshold"] == 50.0

        settings = CannySettings(low_threshold=50.0, high_threshold=100.0, sigma=1.0)
        want = png.encode_png(
            canny_edges(to_grayscale(png.decode_png(data)), settings).to_raster()
        )
        assert (out / "edge.png").read_bytes() == want

    def test_depth_map_written(self, runner, tmp_path):
        cap = tmp_path / "cap.png"
        write_step_png(cap)
        depth = tmp_path / "cap_depth.png"
        raw = np.linspace(0, 65534, 32 * 32, dtype=np.uint16).reshape(32, 32)
        depth.write_bytes(gray16_png(raw))
        out = tmp_path / "maps"
        res = runner.invoke(main, [
            "preprocess", "--input", str(cap), "--out-dir", str(out),
            "--depth", str(depth), "--near", "0.5", "--far", "10",
        ])
        assert res.exit_code == 0, res.output
        report = json.loads(res.output)
        assert report["depth_meta"] == {"near": 0.5, "far": 10.0}
        gray = png.decode_png((out / "depth.png").read_bytes())
        arr = gray.to_array()
        assert arr[0, 0] >= arr[-1, -1]  # near end brighter than far end

    def test_depth_without_planes_exits_2(self, runner, tmp_path):
        cap = tmp_path / "cap.png"
        write_step_png(cap)
        res = runner.invoke(main, [
            "preprocess", "--input", str(cap), "--out-dir", str(tmp_path / "o"),
            "--depth", str(cap),
        ])
        assert res.exit_code == EXIT_BAD_CONFIG

    def test_bad_sigma_exits_2(self, runner, tmp_path):
        cap = tmp_path / "cap.png"
        write_step_png(cap)
        res = runner.invoke(main, [
            "preprocess", "--input", str(cap), "--out-dir", str(tmp_path / "o"),
            "--sigma", "0",
        ])
        assert res.exit_code == EXIT_BAD_CONFIG

    def test_garbage_input_exits_4(self, runner, tmp_path):
        bad = tmp_path / "bad.png"
        bad.write_bytes(b"nope")
        res = runner.invoke(main, [
            "preprocess", "--input", str(bad), "--out-dir", str(tmp_path / "o"),
        ])
        assert res.exit_code == EXIT_IMAGE

    def test_missing_input_exits_4(self, runner, tmp_path):
        res = runner.invoke(main, [
            "preprocess", "--input", str(tmp_path / "absent.png"),
            "--out-dir", str(tmp_path / "o"),
        ])
        assert res.exit_code == EXIT_IMAGE


class TestServe:
    def test_unknown_config_key_exits_2(self, runner, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"portt": 1234}))
        res = runner.invoke(main, ["serve", "--config", str(cfg)])
        assert res.exit_code == EXIT_BAD_CONFIG

    def test_config_must_be_json_object(self, runner, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text("[1,2]")
        res = runner.invoke(main, ["serve", "--config", str(cfg)])
        assert res.exit_code == EXIT_BAD_CONFIG

    def test_occupied_port_exits_3(self, runner, tmp_path):
        blocker = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        blocker.bind(("127.0.0.1", 0))
        port = blocker.getsockname()[1]
        try:
            res = runner.invoke(main, [
                "serve", "--host", "127.0.0.1", "--port", str(port),
                "--store-root", str(tmp_path / "store"),
            ])
            assert res.exit_code == EXIT_BIND
        finally:
            blocker.close()


@pytest.fixture(scope="module")
def live_server(tmp_path_factory):
    import uvicorn

    from atelier.backends.mock import MockBackend
    from atelier.service import create_app
    from atelier.store import ProjectStore

    root = tmp_path_factory.mktemp("srv")
    store = ProjectStore(root / "proj")
    (root / "proj" / "styles.json").write_text(json.dumps({
        "v": 1, "styles": [{"name": "nordic"}],
    }))
    app = create_app(store=store, backend=MockBackend())

    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    probe.bind(("127.0.0.1", 0))
    port = probe.getsockname()[1]
    probe.close()

    server = uvicorn.Server(uvicorn.Config(
        app=app, host="127.0.0.1", port=port, log_level="error",
    ))
    t = threading.Thread(target=server.run, daemon=True)
    t.start()
    base = f"http://127.0.0.1:{port}"
    deadline = time.monotonic() + 10
    while time.monotonic() < deadline:
        try:
            if httpx.get(f"{base}/api/v1/healthz", timeout=1.0).status_code == 200:
                break
        except httpx.TransportError:
            time.sleep(0.05)
    else:
        raise RuntimeError("test server never came up")
    yield base
    server.should_exit = True
    t.join(timeout=5)


class TestSubmit:
    def test_wait_downloads_results(self, runner, tmp_path, live_server):
        cap = tmp_path / "cap.png"
        write_step_png(cap, 64, 64)
        out = tmp_path / "results"
        res = runner.invoke(main, [
            "submit", "--server", live_server, "--capture", str(cap),
            "--prompt", "a cabin", "--width", "64", "--height", "64",
            "--seed", "5", "--style", "nordic:0.8", "--wait",
            "--out-dir", str(out),
        ])
        assert res.exit_code == 0, res.output
        lines = res.output.strip().splitlines()
        job_id = lines[0]
        assert job_id
        saved = [l for l in lines[1:] if l.endswith(".png")]
        assert len(saved) == 1
        img = png.decode_png((out / f"{job_id}-0.png").read_bytes())
        assert (img.width, img.height) == (64, 64)

    def test_submit_without_wait_prints_job_id(self, runner, tmp_path, live_server):
        cap = tmp_path / "cap.png"
        write_step_png(cap, 64, 64)
        res = runner.invoke(main, [
            "submit", "--server", live_server, "--capture", str(cap),
            "--prompt", "x", "--width", "64", "--height", "64", "--no-edge",
        ])
        assert res.exit_code == 0, res.output
        assert res.output.strip()

    def test_invalid_params_exit_6(self, runner, tmp_path, live_server):
        cap = tmp_path / "cap.png"
        write_step_png(cap, 64, 64)
        res = runner.invoke(main, [
            "submit", "--server", live_server, "--capture", str(cap),
            "--prompt", "x", "--width", "64", "--height", "64", "--steps", "0",
        ])
        assert res.exit_code == EXIT_JOB_FAILED

    def test_unreachable_server_exits_5(self, runner, tmp_path):
        cap = tmp_path / "cap.png"
        write_step_png(cap)
        res = runner.invoke(main, [
            "submit", "--server", "http://127.0.0.1:9", "--capture", str(cap),
            "--prompt", "x",
        ])
        assert res.exit_code == EXIT_UNREACHABLE

    def test_missing_capture_file_exits_4(self, runner, live_server):
        res = runner.invoke(main, [
            "submit", "--server", live_server,
            "--capture", "/nonexistent/cap.png", "--prompt", "x",
        ])
        assert res.exit_code == EXIT_IMAGE
